"""Spectral side of the instability criterion.

Eigenvalues are classified against the sector ``|arg z| < alpha*pi/2``, the
matrix is brought to a numerically computed Jordan form with the
off-diagonal ones scaled down to ``gamma``, and the nonlinearity is carried
through the same similarity. Real systems are handled in complex arithmetic.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._norms import state_norm
from .mlf import _cluster_labels

__all__ = [
    "FracSystem",
    "SectorClassification",
    "SectorTag",
    "SpectralError",
    "TransformedSystem",
    "classify_eigenvalue",
    "cluster_eigenvalues",
    "instability_criterion",
    "jordan_structure",
    "lipschitz_estimate",
    "transform_system",
    "weight_factor",
]

BOUNDARY_TOL = 1e-12
CLUSTER_RTOL = 1e-6
_F0_TOL = 1e-14

Nonlinearity = Callable[[np.ndarray], np.ndarray]


class SpectralError(RuntimeError):
    """Eigen-decomposition or Jordan-structure detection failed."""


def _zero_map(x):
    return np.zeros_like(np.asarray(x, dtype=complex))


@dataclass
class FracSystem:
    """``D^alpha x = A x + f(x)`` with Caputo derivative of order ``alpha``.

    Parameters
    ----------
    alpha : float
        Order, strictly inside (0, 1).
    A : array_like, shape (d, d)
    f : callable, optional
        Maps arrays of shape ``(..., d)`` to the same shape. ``None`` means
        the zero map.
    lip_radius : float
        Radius of the max-norm ball on which ``f`` is declared Lipschitz.
    jordan_blocks : list of (eigenvalue, size), optional
        Declared Jordan structure; overrides numerical detection.
    name : str
    """

    alpha: float
    A: np.ndarray
    f: Nonlinearity | None = None
    lip_radius: float = 1.0
    jordan_blocks: list[tuple[complex, int]] | None = None
    name: str = ""

    def __post_init__(self):
        self.alpha = float(self.alpha)
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie strictly inside (0, 1), got {self.alpha!r}")
        A = np.atleast_2d(np.asarray(self.A))
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise ValueError("A must be a non-empty square matrix")
        if not np.all(np.isfinite(A)):
            raise ValueError("A must have finite entries")
        self.A = A
        if not (self.lip_radius > 0 and math.isfinite(self.lip_radius)):
            raise ValueError("lip_radius must be positive and finite")
        if self.f is None:
            self.f = _zero_map
        f0 = np.asarray(self.f(np.zeros(self.dim, dtype=complex)))
        if f0.shape != (self.dim,):
            raise ValueError(f"f must map shape ({self.dim},) to itself, got {f0.shape}")
        if np.max(np.abs(f0)) > _F0_TOL:
            raise ValueError(f"f(0) must vanish, got max |f(0)| = {np.max(np.abs(f0)):.3e}")

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    def rhs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        return x @ self.A.T + self.f(x)


class SectorTag(str, enum.Enum):
    UNSTABLE = "UnstableSector"
    STABLE = "StableSector"
    BOUNDARY = "BoundaryArg"
    ZERO = "Zero"


@dataclass(frozen=True)
class SectorClassification:
    tag: SectorTag
    r: float
    phi: float


def _principal_arg(lam: complex) -> float:
    phi = math.atan2(lam.imag, lam.real)
    return math.pi if phi <= -math.pi else phi


def classify_eigenvalue(alpha: float, lam: complex) -> SectorClassification:
    """Place ``lam`` relative to the sector ``|arg| < alpha*pi/2``.

    Arguments within ``1e-12`` of the sector edge (on either side) are tagged
    ``BoundaryArg``.
    """
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    lam = complex(lam)
    r = abs(lam)
    phi = _principal_arg(lam)
    if r == 0.0:
        return SectorClassification(SectorTag.ZERO, 0.0, 0.0)
    edge = alpha * math.pi / 2
    if abs(abs(phi) - edge) <= BOUNDARY_TOL:
        tag = SectorTag.BOUNDARY
    elif abs(phi) < edge:
        tag = SectorTag.UNSTABLE
    else:
        tag = SectorTag.STABLE
    return SectorClassification(tag, r, phi)


def _matrix_tol(A: np.ndarray) -> float:
    return CLUSTER_RTOL * max(1.0, float(np.linalg.norm(A, 2)))


def cluster_eigenvalues(A) -> list[tuple[complex, int]]:
    """Eigenvalue clusters of ``A`` as ``(mean, multiplicity)``.

    Eigenvalues within ``1e-6 * max(1, ||A||)`` are merged by single linkage;
    cluster means that small are snapped to exactly zero.
    """
    A = np.asarray(A, dtype=complex)
    try:
        ev = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"eigenvalue computation failed: {exc}") from exc
    if not np.all(np.isfinite(ev)):
        raise SpectralError("eigenvalue computation returned non-finite values")
    tol = _matrix_tol(A)
    labels = _cluster_labels(ev, tol)
    out = []
    for c in range(max(labels) + 1):
        members = ev[[i for i, lab in enumerate(labels) if lab == c]]
        mean = complex(members.mean())
        if abs(mean) <= tol:
            mean = 0j
        if abs(mean.imag) <= tol * 1e-6:
            mean = complex(mean.real, 0.0)
        out.append((mean, len(members)))
    return out


def instability_criterion(sys: FracSystem) -> tuple[bool, list[complex]]:
    """Whether some eigenvalue of ``A`` lies strictly inside the unstable sector.

    Returns ``(holds, witnesses)`` with one witness per distinct eigenvalue
    cluster tagged ``UnstableSector``.
    """
    witnesses = [lam for lam, _ in cluster_eigenvalues(sys.A)
                 if classify_eigenvalue(sys.alpha, lam).tag is SectorTag.UNSTABLE]
    return bool(witnesses), witnesses


def weight_factor(alpha: float, mu_unstable: Sequence[complex]) -> float:
    """One third of ``min r^(1/alpha) cos(phi/alpha)`` over the unstable eigenvalues."""
    mu_unstable = list(mu_unstable)
    if not mu_unstable:
        raise ValueError("weight factor is undefined without unstable eigenvalues")
    rates = []
    for lam in mu_unstable:
        c = classify_eigenvalue(alpha, lam)
        if c.tag is not SectorTag.UNSTABLE:
            raise ValueError(f"{lam!r} is not inside the unstable sector for alpha={alpha}")
        rates.append(c.r ** (1 / alpha) * math.cos(c.phi / alpha))
    return min(rates) / 3.0


# ---------------------------------------------------------------------------
# Jordan structure


def _null_basis(M: np.ndarray, tol: float) -> np.ndarray:
    _, s, vh = np.linalg.svd(M)
    rank = int(np.sum(s > tol))
    return vh[rank:].conj().T


def _power_null(B: np.ndarray, j: int, rtol: float, scale: float) -> np.ndarray:
    """Null space of ``B^j``; singular values below ``rtol * scale^j`` count as zero."""
    if j == 0:
        return np.zeros((B.shape[0], 0), dtype=complex)
    return _null_basis(np.linalg.matrix_power(B, j), rtol * scale ** j)


def _chains(B: np.ndarray, sizes: list[int], rtol: float, scale: float,
            lam: complex) -> np.ndarray:
    """Jordan chains ``[B^(s-1) u, ..., B u, u]`` for the requested block sizes."""
    n = B.shape[0]
    cols: list[np.ndarray] = []
    for s in sorted(set(sizes), reverse=True):
        count = sizes.count(s)
        K = _power_null(B, s, rtol, scale)
        prev = _power_null(B, s - 1, rtol, scale)
        span = np.column_stack([prev] + cols) if (prev.size or cols) else np.zeros((n, 0))
        if span.shape[1]:
            Q, _ = np.linalg.qr(span)
            Rm = K - Q @ (Q.conj().T @ K)
        else:
            Rm = K
        if K.shape[1] == 0:
            raise SpectralError(f"cluster ambiguity at eigenvalue {lam:.6g}: "
                                f"no generalised eigenvectors of rank {s}")
        _, sv, vh = np.linalg.svd(Rm, full_matrices=False)
        if len(sv) < count or sv[count - 1] <= 1e-8:
            raise SpectralError(f"cluster ambiguity at eigenvalue {lam:.6g}: "
                                f"cannot find {count} independent chains of length {s}")
        heads = K @ vh[:count].conj().T
        for j in range(count):
            u = heads[:, j] / np.linalg.norm(heads[:, j])
            chain = [u]
            for _ in range(s - 1):
                chain.append(B @ chain[-1])
            cols.extend(chain[::-1])
    return np.column_stack(cols)


def _detect_sizes(B: np.ndarray, m: int, rtol: float, scale: float, lam: complex) -> list[int]:
    nullity = [0]
    for j in range(1, m + 1):
        nullity.append(_power_null(B, j, rtol, scale).shape[1])
        if nullity[-1] >= m:
            break
    if nullity[-1] != m:
        raise SpectralError(
            f"cluster ambiguity at eigenvalue {lam:.6g}: generalised eigenspace has "
            f"dimension {nullity[-1]}, expected multiplicity {m}")
    nullity.append(m)
    at_least = [nullity[j] - nullity[j - 1] for j in range(1, len(nullity))]
    sizes = []
    for j in range(len(at_least) - 1):
        sizes += [j + 1] * (at_least[j] - at_least[j + 1])
    return sorted(sizes, reverse=True)


def jordan_structure(A, declared: list[tuple[complex, int]] | None = None):
    """Eigenvalue clusters, Jordan block sizes and chain matrix ``T``.

    Returns ``(blocks, T)`` where ``blocks`` is a list of
    ``(eigenvalue, size)`` in the column order of ``T`` and
    ``T^-1 A T`` is the Jordan form up to the clustering tolerance.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    clusters = cluster_eigenvalues(A)
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    declared_sizes: dict[int, list[int]] = {}
    if declared is not None:
        for lam_d, size in declared:
            idx = min(range(len(clusters)), key=lambda c: abs(clusters[c][0] - complex(lam_d)))
            if abs(clusters[idx][0] - complex(lam_d)) > 1e-6 * scale:
                raise SpectralError(f"declared eigenvalue {lam_d} does not match the spectrum")
            declared_sizes.setdefault(idx, []).append(int(size))
        for idx, (lam, m) in enumerate(clusters):
            if sum(declared_sizes.get(idx, [])) != m:
                raise SpectralError(
                    f"declared Jordan blocks for eigenvalue {lam:.6g} sum to "
                    f"{sum(declared_sizes.get(idx, []))}, multiplicity is {m}")
    blocks: list[tuple[complex, int]] = []
    cols = []
    for idx, (lam, m) in enumerate(clusters):
        B = A - lam * np.eye(n)
        if idx in declared_sizes:
            sizes = sorted(declared_sizes[idx], reverse=True)
            rtol = 1e-12
        else:
            rtol = CLUSTER_RTOL
            sizes = [1] if m == 1 else _detect_sizes(B, m, rtol, scale, lam)
        if m == 1:
            _, _, vh = np.linalg.svd(B)
            chain_cols = vh[-1].conj()[:, None]
        else:
            chain_cols = _chains(B, sizes, rtol, scale, lam)
        cols.append(chain_cols)
        blocks += [(lam, s) for s in sorted(sizes, reverse=True)]
    T = np.column_stack(cols)
    if np.linalg.matrix_rank(T, tol=1e-10 * np.linalg.norm(T, 2)) < n:
        raise SpectralError("chain matrix is singular")
    return blocks, T


# ---------------------------------------------------------------------------
# transformed system


@dataclass
class TransformedSystem:
    """Diagonalised system ``D^alpha x = diag(mu) x + h(x)``.

    ``h(x) = gamma * N x + (TP)^-1 f(TP x)`` with ``N`` the 0/1 nilpotent
    part of the Jordan form. The first ``k`` entries of ``mu`` lie in the
    unstable sector, the rest do not.
    """

    alpha: float
    mu: np.ndarray
    k: int
    TP: np.ndarray
    TP_inv: np.ndarray
    gamma: float
    nilpotent: np.ndarray
    cond: float
    f: Nonlinearity
    lip_radius: float
    block_sizes: list[int] = field(default_factory=list)
    name: str = ""

    @property
    def dim(self) -> int:
        return len(self.mu)

    @property
    def linear_part(self) -> np.ndarray:
        return np.diag(self.mu) + self.gamma * self.nilpotent

    def h(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        out = self.gamma * (x @ self.nilpotent.T)
        return out + self.f(x @ self.TP.T) @ self.TP_inv.T

    def rhs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        return self.mu * x + self.h(x)

    def ell_h(self, r: float, samples: int = 100_000, seed: int = 0) -> float:
        return lipschitz_estimate(self.h, r, samples, dim=self.dim, seed=seed,
                                  lip_radius=self.lip_radius)

    def to_original(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=complex) @ self.TP.T

    def from_original(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=complex) @ self.TP_inv.T


def transform_system(sys: FracSystem, gamma: float | None = None) -> TransformedSystem:
    """Similarity transform to Jordan form with off-diagonals scaled to ``gamma``.

    Unstable-sector blocks come first. ``gamma=None`` selects
    ``min(0.1, 1/(4 K))`` with ``K`` the estimated kernel constant of the
    spectrum (0.1 when no eigenvalue is unstable).

    Raises
    ------
    SpectralError
        Ambiguous Jordan structure or singular transform.
    """
    blocks, T = jordan_structure(sys.A, sys.jordan_blocks)
    unstable = [classify_eigenvalue(sys.alpha, lam).tag is SectorTag.UNSTABLE for lam, _ in blocks]
    order = [i for i in range(len(blocks)) if unstable[i]] + \
            [i for i in range(len(blocks)) if not unstable[i]]
    starts = np.cumsum([0] + [s for _, s in blocks])
    perm = np.concatenate([np.arange(starts[i], starts[i + 1]) for i in order])
    T = T[:, perm]
    blocks = [blocks[i] for i in order]
    mu = np.concatenate([[lam] * s for lam, s in blocks]).astype(complex)
    k = sum(s for i, (_, s) in zip(order, blocks) if unstable[i])
    n = len(mu)
    N = np.zeros((n, n))
    pos = 0
    for _, s in blocks:
        for j in range(s - 1):
            N[pos + j, pos + j + 1] = 1.0
        pos += s
    if gamma is None:
        if k > 0:
            from .lyapunov_perron import estimate_K
            K_hat = estimate_K(sys.alpha, mu)
            gamma = min(0.1, 1.0 / (4.0 * K_hat))
        else:
            gamma = 0.1
    gamma = float(gamma)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    powers = np.concatenate([gamma ** np.arange(s) for _, s in blocks])
    TP = T * powers
    cond = float(np.linalg.cond(TP))
    if not np.isfinite(cond) or cond > 1e14:
        raise SpectralError(f"transform matrix is singular (condition number {cond:.3e})")
    TP_inv = np.linalg.inv(TP)
    tsys = TransformedSystem(sys.alpha, mu, k, TP, TP_inv, gamma, N, cond, sys.f,
                             sys.lip_radius, [s for _, s in blocks], sys.name)
    h0 = np.max(np.abs(tsys.h(np.zeros(n, dtype=complex))))
    if h0 > _F0_TOL * max(1.0, cond):
        raise SpectralError(f"h(0) = {h0:.3e} does not vanish")
    return tsys


# ---------------------------------------------------------------------------
# Lipschitz sampling


def _polydisc(rng, shape, r, power=0.5):
    rad = r * rng.random(shape) ** power
    return rad * np.exp(2j * np.pi * rng.random(shape))


def _clip(x, r):
    mag = np.abs(x)
    return np.where(mag > r, x * (r / np.maximum(mag, 1e-300)), x)


def lipschitz_estimate(h: Nonlinearity, r: float, samples: int = 100_000, *,
                       dim: int = 1, seed: int = 0, lip_radius: float | None = None) -> float:
    """Sampled lower estimate of the Lipschitz modulus of ``h`` on the ball of radius ``r``.

    Pairs are drawn in the complex max-norm ball: a third independently
    uniform, a third concentrated near the boundary, a third as close pairs
    (separation about ``1e-2 r``) near the boundary. Quotients use the max-modulus
    norm. Deterministic for a given ``seed``.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if lip_radius is not None and r > lip_radius * (1 + 1e-12):
        raise ValueError(f"r={r} exceeds the declared Lipschitz radius {lip_radius}")
    if samples < 1:
        raise ValueError("samples must be a positive integer")
    rng = np.random.default_rng(seed)
    best = 0.0
    chunk = 8192
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        kind = np.arange(done, done + m) % 3
        x = np.where((kind == 0)[:, None], _polydisc(rng, (m, dim), r),
                     _polydisc(rng, (m, dim), r, power=0.05))
        y_far = _polydisc(rng, (m, dim), r, power=np.where(kind == 1, 0.05, 0.5)[:, None])
        step = 1e-2 * r * (0.5 + 0.5 * rng.random((m, dim)))
        y_near = _clip(x + step * np.exp(2j * np.pi * rng.random((m, dim))), r)
        y = np.where((kind == 2)[:, None], y_near, y_far)
        den = state_norm(x - y)
        num = state_norm(np.asarray(h(x), dtype=complex) - np.asarray(h(y), dtype=complex))
        ok = den > 0
        if ok.any():
            best = max(best, float(np.max(num[ok] / den[ok])))
        done += m
    return best
