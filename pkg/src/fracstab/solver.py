"""Caputo initial value problems.

Linear systems are solved exactly with the matrix Mittag-Leffler function.
Nonlinear systems use the fractional Adams-Bashforth-Moulton
predictor-corrector (Diethelm, Ford and Freed, 2002) with full memory on a
uniform grid, iterating the corrector to convergence.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._norms import state_norm
from ._quadrature import convolve_rows, uniform_step
from .mlf import MLParams, eval_matrix, mittag_leffler

__all__ = [
    "DEFAULT_BLOWUP",
    "SolverError",
    "Trajectory",
    "solve_linear_exact",
    "solve_pc",
    "voc_residual",
]

DEFAULT_BLOWUP = 1e8
MAX_CORRECTOR_ITERS = 50
CORRECTOR_RTOL = 1e-13
RUNAWAY_ITERS = 100_000


class SolverError(RuntimeError):
    """Corrector iteration failed to converge; ``step`` is the failing step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass
class Trajectory:
    """Sampled solution ``x(t)``.

    ``states[j]`` is the state at ``t[j]``; ``blowup`` is the first grid time
    at which the norm reached the threshold (``None`` if it never did).
    """

    t: np.ndarray
    states: np.ndarray
    blowup: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    def norms(self) -> np.ndarray:
        return state_norm(self.states)

    def to_csv(self, path=None, seed: int | None = None) -> str:
        """Write ``t, Re x_1, Im x_1, ...`` rows with a ``#`` header of run metadata.

        Floats are written with ``repr`` so identical runs give identical files.
        Returns the text; also writes it to ``path`` when given.
        """
        buf = io.StringIO()
        head = [f"alpha={self.meta.get('alpha')!r}", f"solver={self.meta.get('solver')}",
                f"step={self.meta.get('step')!r}", f"seed={seed!r}",
                f"blowup={self.blowup!r}"]
        buf.write("# " + ",".join(head) + "\n")
        cols = ["t"]
        for i in range(self.dim):
            cols += [f"re_x{i + 1}", f"im_x{i + 1}"]
        buf.write(",".join(cols) + "\n")
        for tj, xj in zip(self.t, self.states):
            vals = [repr(float(tj))]
            for c in xj:
                vals += [repr(float(c.real)), repr(float(c.imag))]
            buf.write(",".join(vals) + "\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def solve_linear_exact(alpha: float, A_or_mu, x0, t_grid) -> Trajectory:
    """``x(t) = E_alpha(t^alpha A) x0`` on ``t_grid``.

    A one-dimensional ``A_or_mu`` is read as the diagonal of ``A``.
    """
    params = MLParams(alpha, 1.0)
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or np.any(t < 0) or np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be ascending and nonnegative")
    x0 = np.atleast_1d(np.asarray(x0, dtype=complex))
    A = np.asarray(A_or_mu, dtype=complex)
    if A.ndim == 1 or (A.ndim == 2 and np.count_nonzero(A - np.diag(np.diag(A))) == 0):
        mu = A if A.ndim == 1 else np.diag(A)
        if mu.shape != x0.shape:
            raise ValueError("dimension mismatch between A and x0")
        states = mittag_leffler(np.outer(t ** alpha, mu), alpha) * x0
    else:
        if A.shape != (x0.size, x0.size):
            raise ValueError("dimension mismatch between A and x0")
        states = np.array([eval_matrix(params, tj ** alpha * A) @ x0 for tj in t])
    states[0] = x0 if t.size and t[0] == 0 else states[0]
    return Trajectory(t, states, None, {"solver": "ml-exact", "alpha": alpha, "step": None})


def _abm_weights(alpha: float, n: int):
    m = np.arange(n + 1, dtype=float)
    b = (m + 1) ** alpha - m ** alpha
    a1 = alpha + 1
    aa = (m + 2) ** a1 + m ** a1 - 2 * (m + 1) ** a1
    a0 = m ** a1 - (m - alpha) * (m + 1) ** alpha
    return b, aa, a0


def _monotone_growth(norms, aligned) -> bool:
    return (all(b > a for a, b in zip(norms[-6:-1], norms[-5:]))
            and all(aligned[-5:]))


def _oscillating(steps, aligned) -> bool:
    return len(aligned) > 0 and not aligned[-1] and steps[-1] > steps[-2]


def _correct(system, base, cc, start, previous, threshold, step, t_step):
    """Iterate ``y = base + cc g(y)`` from ``start``, the prediction made from ``previous``.

    Returns ``(y, crossed)``. Reaching the blowup threshold counts as a
    crossing unless the last increment (the predictor step counting as the
    first) reversed direction and grew: that is the oscillating divergence
    of too large a step on a stiff right-hand side, reported as a failure. An iteration that has not converged
    after ``MAX_CORRECTOR_ITERS`` is followed further (up to
    ``RUNAWAY_ITERS``) only while its norm keeps increasing with increments
    pointing the same way: the discrete equation then has no nearby root.
    """
    y = start
    scale = float(np.abs(base).max())
    norms = [float(np.abs(y).max())]
    aligned = []
    prev = start - previous
    steps = [float(np.abs(prev).max())]
    if not steps[0] > 0:
        prev, steps = None, [np.inf]
    it = 0
    while True:
        y_new = base + cc * system.rhs(y)
        n_new = float(np.abs(y_new).max())
        d = y_new - y
        if prev is not None and np.all(np.isfinite(d)):
            aligned.append(float(np.vdot(prev, d).real) > 0)
        prev = d
        steps.append(float(np.abs(d).max()) if np.all(np.isfinite(d)) else np.inf)
        it += 1
        if not np.isfinite(n_new) or n_new >= threshold:
            if not _oscillating(steps, aligned):
                return y_new, True
            raise SolverError(f"corrector diverged with oscillating iterates at step {step} "
                              f"(t={t_step:.6g})", step)
        delta = steps[-1]
        y = y_new
        norms.append(n_new)
        # relative to the size of the terms being summed, so the test is scale free
        if delta <= CORRECTOR_RTOL * max(n_new, scale) + 1e-300:
            return y, False
        if it >= MAX_CORRECTOR_ITERS:
            if not _monotone_growth(norms, aligned) or it >= RUNAWAY_ITERS:
                raise SolverError(f"corrector did not converge at step {step} "
                                  f"(t={t_step:.6g}) after {it} iterations", step)
            norms = norms[-6:]
            aligned = aligned[-5:]
            steps = steps[-2:]


def solve_pc(system, x0, t_end: float, n_steps: int,
             blowup_threshold: float = DEFAULT_BLOWUP) -> Trajectory:
    """Integrate ``D^alpha x = g(x)`` with the fractional predictor-corrector.

    Parameters
    ----------
    system : FracSystem or TransformedSystem
        Anything with ``alpha`` and a vectorised ``rhs``.
    x0 : array_like, shape (d,)
    t_end : float
    n_steps : int
        At least 2; the grid is ``linspace(0, t_end, n_steps + 1)``.
    blowup_threshold : float
        Integration stops at the first step whose corrector iterates reach
        a max-norm at or above this value without oscillating.

    Raises
    ------
    SolverError
        The corrector did not converge in 50 iterations and its iterates
        were not running away monotonically, or it crossed the threshold
        with growing oscillating iterates.
    """
    alpha = float(system.alpha)
    x0 = np.atleast_1d(np.asarray(x0, dtype=complex))
    if n_steps < 2:
        raise ValueError("n_steps must be at least 2")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not blowup_threshold > state_norm(x0):
        raise ValueError("blowup_threshold must exceed the norm of x0")
    n_steps = int(n_steps)
    h = t_end / n_steps
    t = h * np.arange(n_steps + 1)
    t[-1] = t_end
    cp = h ** alpha / math.gamma(alpha + 1)
    cc = h ** alpha / math.gamma(alpha + 2)
    b, aa, a0 = _abm_weights(alpha, n_steps)
    d = x0.size
    X = np.zeros((n_steps + 1, d), dtype=complex)
    F = np.zeros_like(X)
    X[0] = x0
    F[0] = system.rhs(x0)
    blowup = None
    last = n_steps
    meta = {"solver": "abm-pc", "alpha": alpha, "step": h, "n_steps": n_steps,
            "blowup_threshold": blowup_threshold, "corrector_rtol": CORRECTOR_RTOL,
            "max_corrector_iters": MAX_CORRECTOR_ITERS}
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            pred = x0 + cp * (b[n::-1] @ F[:n + 1])
            # a predictor beyond the threshold says nothing reliable; restart from the last state
            if not np.all(np.isfinite(pred)) or state_norm(pred) >= blowup_threshold:
                pred = X[n]
            base = x0 + cc * (a0[n] * F[0] + aa[n - 1::-1] @ F[1:n + 1] if n > 0 else a0[0] * F[0])
            y, crossed = _correct(system, base, cc, pred, X[n], blowup_threshold, n + 1, t[n + 1])
            if crossed:
                blowup, last = float(t[n + 1]), n
                if np.all(np.isfinite(y)):
                    X[n + 1] = y
                    last = n + 1
                break
            X[n + 1] = y
            F[n + 1] = system.rhs(y)
    return Trajectory(t[:last + 1].copy(), X[:last + 1].copy(), blowup, meta)


def voc_residual(tsys, traj: Trajectory) -> float:
    """Sup over the grid of the variation-of-constants defect of ``traj``.

    ``traj`` must live in the coordinates of ``tsys`` (diagonal linear part
    ``mu``, nonlinearity ``h``) on a uniform grid. The convolution with
    ``(t-s)^(alpha-1) E_{alpha,alpha}(mu (t-s)^alpha)`` uses exact kernel
    integrals against cell-averaged ``h(x)``.
    """
    h_step = uniform_step(traj.t)
    alpha = tsys.alpha
    mu = np.asarray(tsys.mu, dtype=complex)
    x = traj.states
    free = mittag_leffler(np.outer(traj.t ** alpha, mu), alpha) * x[0]
    conv = convolve_rows(alpha, mu, h_step, tsys.h(x))
    return float(np.max(state_norm(x - free - conv)))
