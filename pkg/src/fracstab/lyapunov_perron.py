r"""Lyapunov-Perron operator, weighted norms and contraction checks.

For the diagonal system ``D^alpha x = diag(mu) x + h(x)`` with the first
``k`` eigenvalues in the unstable sector, the operator acts row by row:

* unstable rows (``i < k``), with ``lam = mu^(1/alpha)`` and
  ``c = mu^(1/alpha - 1)``:
  ``(T xi)_i(t) = int_0^t K_i(t-s) g(s) ds - c E_alpha(mu t^alpha) int_0^inf exp(-lam s) g(s) ds``
* other rows: ``(T xi)_i(t) = int_0^t K_i(t-s) g(s) ds``

where ``K_i(s) = s^(alpha-1) E_{alpha,alpha}(mu_i s^alpha)`` and ``g = h_i(xi)``.

The unstable rows are never formed as written: both terms grow like
``exp(lam t)`` and cancel. Splitting ``E_alpha(mu t^alpha) = exp(lam t)/alpha + R0(t)``
and ``K(s) = c exp(lam s)/alpha + R1(s)`` gives the equivalent
``-(c/alpha) int_t^inf exp(-lam (s-t)) g(s) ds + int_0^t R1(t-s) g(s) ds - c R0(t) L``
in which every term stays bounded. ``R0`` and ``R1`` come from
:func:`fracstab.mlf.ml_remainder`, and ``R1 = R0' / mu`` gives exact cell
integrals.

All quadrature acts on cell averages of ``g`` over a uniform grid.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import fftconvolve, lfilter
from scipy.special import gamma as gamma_fn

from ._norms import state_norm
from ._quadrature import cell_average, product_weights, uniform_step
from .mlf import in_growth_sector, mittag_leffler, ml_remainder, principal_power
from .spectral import lipschitz_estimate, weight_factor

__all__ = [
    "ContractionEstimate",
    "ContractionPrecheckError",
    "GridFunction",
    "LyapunovPerronOperator",
    "QuadConfig",
    "Tail",
    "TailError",
    "TrialRecord",
    "apply_operator",
    "choose_epsilon",
    "contraction_ratio",
    "estimate_K",
    "kernel_integral_bound",
    "kernel_integrals",
    "limit_relation_check",
    "recover_initial_value",
    "verify_fixed_point",
    "weighted_norm",
]

CONTRACTION_TARGET = 2.0 / 3.0


class Tail(str, enum.Enum):
    ZERO = "Zero"
    HOLD_LAST = "HoldLast"


class TailError(ValueError):
    """The truncated improper integral misses its tolerance; ``needed`` is the required cutoff."""

    def __init__(self, message: str, needed: float):
        super().__init__(message)
        self.needed = needed


class ContractionPrecheckError(ValueError):
    """``K * l_h(eps) <= 2/3`` fails for the requested radius."""


@dataclass
class GridFunction:
    """Function on ``[0, inf)`` sampled on a grid, extended past the last point by ``tail``."""

    t: np.ndarray
    values: np.ndarray
    tail: Tail = Tail.HOLD_LAST
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.t.size:
            raise ValueError("values must have one row per grid point")
        if self.t.size == 0 or self.t[0] != 0.0 or np.any(np.diff(self.t) <= 0):
            raise ValueError("grid must start at 0 and increase strictly")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        self.values = v
        self.tail = Tail(self.tail)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def sup_norm(self) -> float:
        return float(np.max(state_norm(self.values)))


@dataclass(frozen=True)
class QuadConfig:
    """Quadrature options for the improper integral.

    ``tau_max=None`` integrates the tail model exactly to infinity.
    A finite ``tau_max`` (not below the grid end) truncates it, and the
    truncation bound ``max|g| exp(-Re(lam) tau_max) / Re(lam)`` must stay
    below ``tail_tol``.
    """

    tau_max: float | None = None
    tail_tol: float = 1e-12


def weighted_norm(xi: GridFunction, w: float) -> float:
    """``max_t ||xi(t)|| exp(-w t)`` over the grid.

    Neither tail model can raise the value past the last grid point, since
    the weight decreases.
    """
    if not w > 0:
        raise ValueError("w must be positive")
    return float(np.max(state_norm(xi.values) * np.exp(-w * xi.t)))


# ---------------------------------------------------------------------------
# operator


def _growth_constants(alpha, mu):
    return principal_power(mu, 1.0 / alpha), principal_power(mu, 1.0 / alpha - 1.0)


class LyapunovPerronOperator:
    """The operator ``T`` of a transformed system on a fixed uniform grid.

    Kernel weights are computed once, so repeated application (as in the
    contraction trials) costs a few FFT convolutions.
    """

    def __init__(self, tsys, t_grid, quad: QuadConfig | None = None):
        self.tsys = tsys
        self.quad = quad or QuadConfig()
        self.t = np.asarray(t_grid, dtype=float)
        self.h_step = uniform_step(self.t)
        alpha = tsys.alpha
        n = self.t.size - 1
        self.rows = []
        for i, m in enumerate(np.asarray(tsys.mu, dtype=complex)):
            if i < tsys.k:
                if not in_growth_sector(alpha, m):
                    raise ValueError(f"row {i} is marked unstable but mu={m} is outside the sector")
                lam, c = _growth_constants(alpha, m)
                R0 = ml_remainder(m * self.t ** alpha, alpha, 1.0)
                self.rows.append({
                    "unstable": True, "lam": lam, "c": c, "R0": R0,
                    "W": np.diff(R0) / m,
                    "decay": np.exp(-lam * self.h_step),
                    "cell": -np.expm1(-lam * self.h_step) / lam,
                })
            else:
                self.rows.append({"unstable": False,
                                  "W": product_weights(alpha, m, self.h_step, n)})

    def _improper(self, row, gbar_i, g_last, tail, gmax):
        """Backward sums ``I_n = int_{t_n}^inf exp(-lam (s - t_n)) g(s) ds`` on the grid."""
        lam = row["lam"]
        t_end = self.t[-1]
        tail_bound = 0.0
        if tail is Tail.HOLD_LAST:
            if self.quad.tau_max is None:
                I_end = g_last / lam
            else:
                span = self.quad.tau_max - t_end
                if span < 0:
                    raise ValueError("tau_max must not be below the grid end")
                I_end = g_last * (-np.expm1(-lam * span)) / lam
                tail_bound = gmax * math.exp(-lam.real * self.quad.tau_max) / lam.real
                if tail_bound > self.quad.tail_tol:
                    needed = math.log(max(gmax, 1e-300) / (lam.real * self.quad.tail_tol)) / lam.real
                    raise TailError(
                        f"tau_max={self.quad.tau_max:g} leaves a tail bound of {tail_bound:.3e} "
                        f"above {self.quad.tail_tol:.1e}; need tau_max >= {needed:.6g}", needed)
        else:
            I_end = 0.0
        x = (gbar_i * row["cell"])[::-1]
        y, _ = lfilter([1.0], [1.0, -row["decay"]], x, zi=np.array([row["decay"] * I_end]))
        return np.concatenate([y[::-1], [I_end]]), tail_bound

    def apply(self, xi: GridFunction) -> GridFunction:
        if xi.t.size != self.t.size or np.max(np.abs(xi.t - self.t)) > 0:
            raise ValueError("grid function lives on a different grid")
        alpha = self.tsys.alpha
        g = np.asarray(self.tsys.h(xi.values), dtype=complex)
        gbar = cell_average(g)
        gmax = float(np.max(np.abs(g))) if g.size else 0.0
        n = self.t.size - 1
        out = np.zeros_like(g)
        tail_bound = 0.0
        for i, row in enumerate(self.rows):
            if not np.any(g[:, i]):
                continue
            conv = fftconvolve(row["W"], gbar[:, i])[:n]
            if row["unstable"]:
                I, tb = self._improper(row, gbar[:, i], g[-1, i], xi.tail, gmax)
                tail_bound = max(tail_bound, tb)
                c, L = row["c"], I[0]
                out[:, i] = -(c / alpha) * I - c * row["R0"] * L
                out[1:, i] += conv
            else:
                out[1:, i] = conv
        return GridFunction(self.t, out, xi.tail, {"tail_bound": tail_bound})

    def improper_integrals(self, xi: GridFunction) -> np.ndarray:
        """``int_0^inf exp(-lam_i s) h_i(xi(s)) ds`` for the unstable rows."""
        g = np.asarray(self.tsys.h(xi.values), dtype=complex)
        gbar = cell_average(g)
        gmax = float(np.max(np.abs(g))) if g.size else 0.0
        out = np.zeros(self.tsys.k, dtype=complex)
        for i in range(self.tsys.k):
            I, _ = self._improper(self.rows[i], gbar[:, i], g[-1, i], xi.tail, gmax)
            out[i] = I[0]
        return out


def apply_operator(tsys, xi: GridFunction, quad: QuadConfig | None = None) -> GridFunction:
    """``T xi`` on the grid of ``xi`` (uniform grids only)."""
    return LyapunovPerronOperator(tsys, xi.t, quad).apply(xi)


# ---------------------------------------------------------------------------
# kernel integrals


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _panels(breaks):
    a, b = breaks[:-1], breaks[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    return mid[:, None] + half[:, None] * _GL_X, half[:, None] * _GL_W


def _s_breaks(lam, s_max, extra):
    """Panel edges in time: geometric near 0, uniform at scale 1/|lam|, plus ``extra``."""
    step = 0.5 / abs(lam)
    s0 = min(step, s_max)
    geo = s0 * 2.0 ** -np.arange(60, 0, -1)
    uni = np.arange(s0, s_max + step, step)
    br = np.concatenate([[0.0], geo, uni, np.asarray(extra, dtype=float)])
    br = np.unique(br[br <= s_max])
    return br


def _gamma_neg(alpha):
    return float(gamma_fn(-alpha))


def _i2_at_infinity(alpha, mu):
    """``int_0^inf |R1(s)| ds``, the limit of the second kernel integral."""
    lam, _ = _growth_constants(alpha, mu)
    s_end = 60.0 / abs(lam)
    u_s = _s_breaks(lam, s_end, []) ** alpha
    u_far = u_s[-1] * np.geomspace(1.0, 1e6, 121)[1:]
    nodes, wts = _panels(np.concatenate([u_s, u_far]))
    vals = np.abs(ml_remainder(mu * nodes, alpha, alpha))
    head = float(np.sum(vals * wts)) / alpha
    # algebraic decay |mu u|^-2 / |Gamma(-alpha)| beyond the last node
    u_last = u_far[-1]
    tail = 1.0 / (abs(mu) ** 2 * abs(_gamma_neg(alpha)) * u_last) / alpha if alpha < 1 else 0.0
    return head + tail


def kernel_integrals(alpha: float, mu: complex, t) -> tuple[np.ndarray, np.ndarray]:
    """Both kernel integrals for ``|g| = 1`` at the times ``t``.

    Returns ``(I1, I2)`` with
    ``I1(t) = int_t^inf |c E_alpha(mu t^alpha) exp(-lam s)| ds`` and
    ``I2(t) = int_0^t |K(t-s) - c E_alpha(mu t^alpha) exp(-lam s)| ds``.
    ``t = inf`` is allowed and gives the limits.
    """
    mu = complex(mu)
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    if not in_growth_sector(alpha, mu):
        raise ValueError(f"mu={mu!r} is outside the unstable sector for alpha={alpha}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("times must be nonnegative")
    lam, c = _growth_constants(alpha, mu)
    finite = np.isfinite(t)
    I1 = np.empty(t.shape)
    I2 = np.zeros(t.shape)
    tf = t[finite]
    R0 = ml_remainder(mu * tf ** alpha, alpha, 1.0)
    with np.errstate(under="ignore"):
        I1[finite] = abs(c) * np.abs(1.0 / alpha + R0 * np.exp(-lam * tf)) / lam.real
    I1[~finite] = abs(c) / (alpha * lam.real)
    if np.any(~finite):
        I2[~finite] = _i2_at_infinity(alpha, mu) if alpha < 1 else 0.0
    pos = tf > 0
    if alpha < 1 and np.any(pos):
        tp = tf[pos]
        br = _s_breaks(lam, float(tp.max()), tp)
        u_br = br ** alpha
        nodes, wts = _panels(u_br)
        rem = ml_remainder(mu * nodes, alpha, alpha)
        s_nodes = nodes ** (1.0 / alpha)
        edge_index = np.searchsorted(br, tp)
        vals = np.empty(tp.size)
        for j, (tj, r0j, e) in enumerate(zip(tp, R0[pos], edge_index)):
            sn = s_nodes[:e]
            with np.errstate(under="ignore"):
                corr = c * r0j * np.exp(-lam * (tj - sn)) * sn ** (1.0 - alpha)
            vals[j] = float(np.sum(np.abs(rem[:e] - corr) * wts[:e])) / alpha
        idx = np.nonzero(finite)[0][pos]
        I2[idx] = vals
    return I1, I2


def _default_times(alpha, mu):
    lam, _ = _growth_constants(alpha, complex(mu))
    scale = 1.0 / lam.real
    return np.concatenate([[0.0], np.linspace(0.0, 10 * scale, 201)[1:],
                           np.geomspace(10 * scale, 400 * scale, 60)[1:], [np.inf]])


def kernel_integral_bound(alpha: float, mu: complex, t_grid=None) -> float:
    """Largest value of either kernel integral over the sampled times.

    ``t_grid=None`` samples ``[0, 400/Re(lam)]`` densely and adds the
    ``t -> inf`` limits.

    Raises
    ------
    ValueError
        ``mu`` outside the unstable sector.
    """
    t = _default_times(alpha, mu) if t_grid is None else np.asarray(t_grid, dtype=float)
    I1, I2 = kernel_integrals(alpha, mu, t)
    out = float(max(I1.max(), I2.max()))
    if not math.isfinite(out):
        raise ArithmeticError("kernel integral quadrature produced a non-finite value")
    return out


def _stable_row_constant(alpha, mu, w):
    """``int_0^inf s^(alpha-1) |E_{alpha,alpha}(mu s^alpha)| exp(-w s) ds``."""
    mu = complex(mu)
    if mu == 0:
        return w ** -alpha
    s_end = 40.0 / w
    s_br = np.unique(np.concatenate([[0.0], (s_end * 2.0 ** -np.arange(50, 0, -1)),
                                     np.linspace(0.0, s_end, 161)]))
    nodes, wts = _panels(s_br ** alpha)
    s_nodes = nodes ** (1.0 / alpha)
    vals = np.abs(mittag_leffler(mu * nodes, alpha, alpha)) * np.exp(-w * s_nodes)
    return float(np.sum(vals * wts)) / alpha


def estimate_K(alpha: float, mu: Sequence[complex], w: float | None = None,
               t_grid=None) -> float:
    """Contraction constant of the operator in the weighted norm.

    Unstable rows contribute ``sup_t [I2(t) + |c| |E_alpha(mu t^alpha) exp(-lam t)| / (Re lam - w)]``;
    other rows contribute ``int_0^inf s^(alpha-1) |E_{alpha,alpha}(mu s^alpha)| exp(-w s) ds``.
    The result is the maximum over rows, matching the max-modulus norm.
    """
    mu = [complex(m) for m in mu]
    unstable = [m for m in mu if in_growth_sector(alpha, m)]
    if not unstable:
        raise ValueError("estimate_K needs at least one eigenvalue in the unstable sector")
    if w is None:
        w = weight_factor(alpha, unstable)
    best = 0.0
    for m in dict.fromkeys(mu):
        if in_growth_sector(alpha, m):
            lam, c = _growth_constants(alpha, m)
            if not lam.real > w:
                raise ValueError("w must be below Re(mu^(1/alpha)) for every unstable mu")
            t = _default_times(alpha, m) if t_grid is None else np.asarray(t_grid, dtype=float)
            finite = np.isfinite(t)
            I1, I2 = kernel_integrals(alpha, m, t)
            weighted = I1 * lam.real / (lam.real - w)
            best = max(best, float(np.max(I2 + weighted)))
        else:
            best = max(best, _stable_row_constant(alpha, m, w))
    return best


# ---------------------------------------------------------------------------
# limit relation


def _cell_integrals_R1(alpha, mu, t, grid):
    """``int_{t_j}^{t_{j+1}} R1(t - s) ds`` for the cells of ``grid`` below ``t``."""
    edges = grid[grid <= t]
    R0 = ml_remainder(mu * (t - edges) ** alpha, alpha, 1.0)
    return (R0[:-1] - R0[1:]) / mu, edges


def limit_relation_check(alpha: float, mu: complex, g: GridFunction, t_list) -> list[float]:
    """Distance between the normalised convolution and its limit at each ``t``.

    Computes ``|int_0^t K(t-s) g(s) ds / E_alpha(mu t^alpha) - c int_0^inf exp(-lam s) g(s) ds|``
    in the bounded form
    ``[c int_0^t exp(-lam s) g + alpha exp(-lam t) int_0^t R1(t-s) g] / (1 + alpha R0(t) exp(-lam t))``.
    """
    mu = complex(mu)
    if not in_growth_sector(alpha, mu):
        raise ValueError(f"mu={mu!r} is outside the unstable sector for alpha={alpha}")
    if g.dim != 1:
        raise ValueError("limit_relation_check takes a scalar grid function")
    lam, c = _growth_constants(alpha, mu)
    grid = g.t
    gv = g.values[:, 0]
    gbar = cell_average(gv)
    cell_exp = (np.exp(-lam * grid[:-1]) - np.exp(-lam * grid[1:])) / lam
    last = gv[-1] if g.tail is Tail.HOLD_LAST else 0.0
    rhs = c * (np.sum(gbar * cell_exp) + last * np.exp(-lam * grid[-1]) / lam)
    out = []
    for t in np.atleast_1d(np.asarray(t_list, dtype=float)):
        if not t > 0:
            raise ValueError("times must be positive")
        edges = grid[grid <= t]
        ncell = edges.size - 1
        partial_exp = np.sum(gbar[:ncell] * cell_exp[:ncell])
        W, _ = _cell_integrals_R1(alpha, mu, t, grid)
        conv = np.sum(W * gbar[:ncell])
        if t > edges[-1]:
            # partial cell or tail beyond the grid
            if edges[-1] < grid[-1]:
                j = ncell
                frac_val = 0.5 * (gv[j] + np.interp(t, grid, gv.real) + 1j * np.interp(t, grid, gv.imag))
            else:
                frac_val = last
            a = edges[-1]
            partial_exp += frac_val * (np.exp(-lam * a) - np.exp(-lam * t)) / lam
            R0_end = ml_remainder(np.array([mu * (t - a) ** alpha, 0.0]), alpha, 1.0)
            conv += frac_val * (R0_end[0] - R0_end[1]) / mu
        R0_t = complex(ml_remainder(mu * t ** alpha, alpha, 1.0))
        with np.errstate(under="ignore"):
            decay = complex(np.exp(-lam * t))
        lhs = (c * partial_exp + alpha * decay * conv) / (1.0 + alpha * R0_t * decay)
        out.append(float(abs(lhs - rhs)))
    return out


# ---------------------------------------------------------------------------
# contraction


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    ratio: float
    norm_xi: float
    norm_xihat: float
    sup_ratio: float


@dataclass
class ContractionEstimate:
    """Observed contraction of the operator on random pairs in a sup-norm ball."""

    K_hat: float
    ell_h_used: float
    ratio_observed: float
    epsilon: float
    w_used: float
    sup_ratio_observed: float = 0.0
    seed: int = 0
    trials: list[TrialRecord] = field(default_factory=list, repr=False)

    @property
    def bound(self) -> float:
        return self.K_hat * self.ell_h_used

    def summary(self) -> str:
        return (f"K_hat={self.K_hat!r},ell_h={self.ell_h_used!r},epsilon={self.epsilon!r},"
                f"w={self.w_used!r},max_ratio={self.ratio_observed!r},seed={self.seed!r}")

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("# " + self.summary() + "\n")
        buf.write("trial,ratio,norm_xi,norm_xihat\n")
        for r in self.trials:
            buf.write(f"{r.trial},{r.ratio!r},{r.norm_xi!r},{r.norm_xihat!r}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _random_pl(rng, t, dim, eps, knots):
    tk = np.linspace(0.0, t[-1], knots)
    rad = eps * np.sqrt(rng.random((knots, dim)))
    vals = rad * np.exp(2j * np.pi * rng.random((knots, dim)))
    out = np.empty((t.size, dim), dtype=complex)
    for i in range(dim):
        out[:, i] = np.interp(t, tk, vals[:, i].real) + 1j * np.interp(t, tk, vals[:, i].imag)
    return out


def _default_grid(w, t_end=None, n_steps=None):
    t_end = 20.0 / w if t_end is None else float(t_end)
    n_steps = 1024 if n_steps is None else int(n_steps)
    return np.linspace(0.0, t_end, n_steps + 1)


def _unstable_mu(tsys):
    if tsys.k == 0:
        raise ValueError("the transformed system has no unstable directions")
    return list(np.asarray(tsys.mu)[:tsys.k])


def contraction_ratio(tsys, epsilon: float, trials: int = 500, seed: int = 0, *,
                      t_end: float | None = None, n_steps: int | None = None,
                      knots: int = 12, ell_samples: int = 100_000,
                      K_hat: float | None = None, pairs=None) -> ContractionEstimate:
    """Largest ``||T xi - T xihat||_w / ||xi - xihat||_w`` over random pairs.

    Pairs are piecewise-linear with ``knots`` nodes, values uniform in the
    polydisc of radius ``epsilon``, held constant past the grid.
    ``pairs`` may supply explicit ``(xi, xihat)`` value arrays instead.

    Raises
    ------
    ContractionPrecheckError
        ``K_hat * l_h(epsilon) > 2/3``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if epsilon > tsys.lip_radius * (1 + 1e-12):
        raise ValueError(f"epsilon={epsilon} exceeds the declared Lipschitz radius {tsys.lip_radius}")
    w = weight_factor(tsys.alpha, _unstable_mu(tsys))
    K = estimate_K(tsys.alpha, tsys.mu, w) if K_hat is None else float(K_hat)
    ell = lipschitz_estimate(tsys.h, epsilon, ell_samples, dim=tsys.dim, seed=seed,
                             lip_radius=tsys.lip_radius)
    if K * ell > CONTRACTION_TARGET:
        raise ContractionPrecheckError(
            f"K(alpha,A)*l_h(eps) <= 2/3 violated: {K:.6g} * {ell:.6g} = {K * ell:.6g} "
            f"at eps={epsilon:g}")
    t = _default_grid(w, t_end, n_steps)
    op = LyapunovPerronOperator(tsys, t)
    rng = np.random.default_rng(seed)
    records = []
    if pairs is None:
        pairs = ((_random_pl(rng, t, tsys.dim, epsilon, knots),
                  _random_pl(rng, t, tsys.dim, epsilon, knots)) for _ in range(trials))
    for j, (a, b) in enumerate(pairs):
        xi = GridFunction(t, a, Tail.HOLD_LAST)
        xh = GridFunction(t, b, Tail.HOLD_LAST)
        diff = GridFunction(t, xi.values - xh.values, Tail.HOLD_LAST)
        den = weighted_norm(diff, w)
        if den == 0:
            continue
        Td = op.apply(xi).values - op.apply(xh).values
        num = weighted_norm(GridFunction(t, Td, Tail.HOLD_LAST), w)
        sup_ratio = float(np.max(state_norm(Td)) / diff.sup_norm())
        records.append(TrialRecord(j, num / den, xi.sup_norm(), xh.sup_norm(), sup_ratio))
    ratio = max((r.ratio for r in records), default=0.0)
    sup_ratio = max((r.sup_ratio for r in records), default=0.0)
    return ContractionEstimate(K, ell, ratio, float(epsilon), w, sup_ratio, seed, records)


def choose_epsilon(tsys, eps_hat: float | None = None, max_halvings: int = 60,
                   ell_samples: int = 20_000, seed: int = 0) -> tuple[float, float, float]:
    """Largest ``eps_hat * 2^-j`` with ``K_hat * l_h(eps) <= 2/3``.

    ``eps_hat`` defaults to the declared Lipschitz radius. Returns
    ``(epsilon, K_hat, l_h(epsilon))``.
    """
    eps = float(tsys.lip_radius if eps_hat is None else eps_hat)
    w = weight_factor(tsys.alpha, _unstable_mu(tsys))
    K = estimate_K(tsys.alpha, tsys.mu, w)
    for _ in range(max_halvings + 1):
        ell = lipschitz_estimate(tsys.h, eps, ell_samples, dim=tsys.dim, seed=seed,
                                 lip_radius=tsys.lip_radius)
        if K * ell <= CONTRACTION_TARGET:
            return eps, K, ell
        eps /= 2
    raise ContractionPrecheckError(
        f"no radius down to {eps * 2:.3e} satisfies K*l_h(eps) <= 2/3 (K={K:.6g}); "
        "the linear part gamma*N alone may be too large")


# ---------------------------------------------------------------------------
# fixed point


def recover_initial_value(tsys, traj, quad: QuadConfig | None = None) -> np.ndarray:
    """``-c_i int_0^inf exp(-lam_i s) h_i(phi(s)) ds`` for the unstable rows.

    For a bounded solution this reproduces the unstable components of the
    initial value.
    """
    phi = GridFunction(traj.t, traj.states, Tail.HOLD_LAST)
    op = LyapunovPerronOperator(tsys, traj.t, quad)
    L = op.improper_integrals(phi)
    c = np.array([row["c"] for row in op.rows[:tsys.k]], dtype=complex)
    return -c * L


def verify_fixed_point(tsys, traj, quad: QuadConfig | None = None) -> float:
    """``max(||T phi - phi||_w, max_i |x0_i - recovered_i|)`` for a bounded trajectory.

    ``traj`` must be in the coordinates of ``tsys`` on a uniform grid; the
    solution is held constant past its last sample. ``w`` is the system's
    weight factor, or 1/3 when no eigenvalue is unstable.

    Raises
    ------
    ValueError
        The trajectory recorded a blowup.
    """
    if traj.blowup is not None:
        raise ValueError("trajectory blew up; the fixed-point identity needs a bounded solution")
    phi = GridFunction(traj.t, traj.states, Tail.HOLD_LAST)
    w = weight_factor(tsys.alpha, _unstable_mu(tsys)) if tsys.k else 1.0 / 3.0
    op = LyapunovPerronOperator(tsys, traj.t, quad)
    Tphi = op.apply(phi)
    res = weighted_norm(GridFunction(traj.t, Tphi.values - phi.values), w)
    if tsys.k:
        rec = recover_initial_value(tsys, traj, quad)
        res = max(res, float(np.max(np.abs(rec - traj.states[0, :tsys.k]))))
    return float(res)
