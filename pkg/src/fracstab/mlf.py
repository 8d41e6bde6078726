r"""Mittag-Leffler functions :math:`E_{\alpha,\beta}` for scalar, array and matrix arguments.

Scalar evaluation switches between three regimes:

``Series``
    The defining power series, used for :math:`|z| \le 5`. It is summed in
    double precision when the rounding bound permits and otherwise with
    mpmath at a working precision derived from the cancellation ratio.
``Integral``
    Inversion of the Laplace transform :math:`s^{\alpha-\beta}/(s^\alpha - z)`
    on an optimal parabolic contour (R. Garrappa, SIAM J. Numer. Anal. 53,
    2015), plus the residues of the poles lying to the right of the contour.
``Asymptotic``
    Pole contributions :math:`\alpha^{-1} s^{1-\beta} e^{s}` plus the algebraic
    tail :math:`-\sum_k z^{-k}/\Gamma(\beta-\alpha k)`, used for large
    :math:`|z|` in the growth sector when the optimally truncated tail is
    negligible.

The growth sector is :math:`\{z \ne 0 : |\arg z| < \alpha\pi/2\}`; there the
exponential term dominates and :func:`ml_remainder` returns what is left
after removing it, computed without cancellation.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import integrate, linalg
from scipy.special import gammaln, rgamma

__all__ = [
    "AsymptoticBound",
    "ClusterError",
    "MLEvaluationError",
    "MLParams",
    "MLResult",
    "Regime",
    "asymptotic_approx",
    "eval_matrix",
    "eval_scalar",
    "in_growth_sector",
    "mittag_leffler",
    "ml_remainder",
    "principal_power",
    "residual_lemma3",
]

SERIES_RADIUS = 5.0
CLUSTER_RTOL = 1e-6
EXPANSION_MIN_ARGUMENT = 1.0

_EPS = float(np.finfo(float).eps)
_LOG_EPS = math.log(_EPS)
_SERIES_CUTOFF = 1e-17
_DOUBLE_SERIES_RTOL = 1e-12
_ASYMPTOTIC_RTOL = 1e-13
_CONTRACT_RTOL = 1e-10
_DIRECT_REMAINDER_MAX = 1e3
_MAX_DPS = 3000


class Regime(str, enum.Enum):
    SERIES = "Series"
    INTEGRAL = "Integral"
    ASYMPTOTIC = "Asymptotic"


class MLEvaluationError(ArithmeticError):
    """Evaluation did not reach its accuracy target.

    ``partial`` holds the best value obtained, ``error_estimate`` its
    estimated absolute error.
    """

    def __init__(self, message: str, partial: complex | None = None,
                 error_estimate: float | None = None):
        super().__init__(message)
        self.partial = partial
        self.error_estimate = error_estimate


class ClusterError(MLEvaluationError):
    """Eigenvalue clustering of a matrix argument is ambiguous."""


@dataclass(frozen=True)
class MLParams:
    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (0.0 < a <= 1.0):
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not (b > 0.0 and math.isfinite(b)):
            raise ValueError(f"beta must be positive, got {self.beta!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


@dataclass(frozen=True)
class MLResult:
    value: complex
    regime: Regime
    abs_error_estimate: float


@dataclass(frozen=True)
class AsymptoticBound:
    """Measured constants of the large-time expansion for one ``(alpha, lam)``.

    ``t``, ``residual_e`` and ``residual_kernel`` hold the samples the
    constants were fitted on (times at or above ``t0``).
    """

    t0: float
    m_const: float
    t: np.ndarray = field(repr=False, compare=False)
    residual_e: np.ndarray = field(repr=False, compare=False)
    residual_kernel: np.ndarray = field(repr=False, compare=False)


def principal_power(z, p):
    """``z**p`` on the principal branch, with ``arg z`` in ``(-pi, pi]``."""
    z = np.asarray(z, dtype=complex)
    arg = np.angle(z)
    arg = np.where(arg <= -np.pi, np.pi, arg)
    with np.errstate(divide="ignore"):
        out = np.exp(p * (np.log(np.abs(z)) + 1j * arg))
    out = np.where(z == 0, 0.0 if p > 0 else (1.0 if p == 0 else np.inf), out)
    return complex(out) if out.ndim == 0 else out


def in_growth_sector(alpha: float, z) -> np.ndarray | bool:
    """``z != 0`` and ``|arg z| < alpha*pi/2`` (strict)."""
    z = np.asarray(z, dtype=complex)
    arg = np.abs(np.angle(z))
    arg = np.where(arg >= np.pi, np.pi, arg)
    out = (z != 0) & (arg < alpha * np.pi / 2)
    return bool(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# power series


def _series_length(alpha: float, beta: float, absz: float) -> tuple[int, int]:
    """Number of terms and index of the largest term for ``|z| = absz``.

    The log-terms ``k log|z| - lgamma(alpha k + beta)`` are concave in k, so
    after the peak the first term below the cutoff ends the sum.
    """
    if absz == 0.0:
        return 1, 0
    logz = math.log(absz)
    n = 64
    while n <= 1 << 18:
        k = np.arange(n)
        lt = k * logz - gammaln(alpha * k + beta)
        kpk = int(np.argmax(lt))
        cutoff = math.log(_SERIES_CUTOFF) + max(lt[kpk], 0.0)
        below = np.nonzero((k > kpk) & (lt < cutoff))[0]
        if below.size:
            return int(below[0]) + 1, kpk
        n *= 2
    raise MLEvaluationError(f"series for |z|={absz:g} needs more than {n} terms")


def _series_double(alpha, beta, z):
    """Return ``(value, error_bound, sum_of_abs_terms, peak_index)``."""
    absz = abs(z)
    if absz == 0.0:
        v = float(rgamma(beta))
        return complex(v), _EPS * abs(v), abs(v), 0
    n, kpk = _series_length(alpha, beta, absz)
    k = np.arange(n)
    lt = k * math.log(absz) - gammaln(alpha * k + beta)
    theta = cmath.phase(z)
    terms = np.exp(lt + 1j * k * theta)
    value = complex(math.fsum(terms.real), math.fsum(terms.imag))
    mags = np.abs(terms)
    rounding = _EPS * float(np.sum(mags * (np.abs(lt) + k * abs(theta) + 4.0)))
    return value, rounding + float(mags[-1]), float(mags.sum()), kpk


_RGAMMA_CACHE: dict[tuple[float, float, int], list] = {}


def _rgamma_coeffs(alpha, beta, dps, n):
    """``1/Gamma(alpha k + beta)`` for ``k < n`` at ``dps`` digits, cached across calls."""
    key = (alpha, beta, dps)
    table = _RGAMMA_CACHE.get(key)
    if table is None:
        if len(_RGAMMA_CACHE) >= 32:
            _RGAMMA_CACHE.clear()
        table = _RGAMMA_CACHE[key] = []
    if len(table) < n:
        with mpmath.workdps(dps):
            a, b = mpmath.mpf(alpha), mpmath.mpf(beta)
            table.extend(mpmath.rgamma(a * k + b) for k in range(len(table), max(n, 2 * len(table))))
    return table


def _series_mp(alpha, beta, z, abs_sum, guess, kpk):
    ratio = abs_sum / max(abs(guess), 1e-300)
    # rounded up so that the cached coefficient tables are shared between nearby arguments
    dps = 32 * math.ceil((30 + int(math.log10(max(ratio, 1.0)))) / 32)
    while True:
        with mpmath.workdps(dps):
            zz = mpmath.mpc(z)
            stop = mpmath.mpf(10) ** (-dps) * abs_sum
            s, power, k = mpmath.mpc(0), mpmath.mpc(1), 0
            coeffs = _rgamma_coeffs(alpha, beta, dps, 2 * kpk + 64)
            while True:
                if k >= len(coeffs):
                    coeffs = _rgamma_coeffs(alpha, beta, dps, k + 1)
                term = power * coeffs[k]
                s += term
                if k > kpk and abs(term) < stop:
                    break
                power *= zz
                k += 1
            digits_left = dps - math.log10(max(abs_sum / max(float(abs(s)), 1e-300), 1.0))
        if digits_left >= 20 or dps >= _MAX_DPS:
            break
        dps = min(2 * dps, _MAX_DPS)
    value = complex(s)
    err = float(abs(term)) + 10.0 ** (-dps) * abs_sum * 10 + _EPS * abs(value)
    return value, err


def _eval_series(alpha, beta, z):
    v, err, abs_sum, kpk = _series_double(alpha, beta, z)
    if err <= _DOUBLE_SERIES_RTOL * abs(v):
        return v, err
    return _series_mp(alpha, beta, z, abs_sum, v, kpk)


def _series_vec(alpha, beta, z):
    """Double-precision series on an array; also returns the rounding bound."""
    absz = np.abs(z)
    n, _ = _series_length(alpha, beta, float(absz.max()))
    theta = np.angle(z)
    with np.errstate(divide="ignore"):
        logz = np.log(absz)
    total = np.zeros(z.shape, dtype=complex)
    bound = np.zeros(z.shape)
    for k in range(n):
        lg = gammaln(alpha * k + beta)
        if k == 0:
            lt = np.full(z.shape, -lg)
        else:
            lt = np.where(absz > 0, k * logz - lg, -np.inf)
        term = np.exp(lt + 1j * k * theta)
        total += term
        mag = np.abs(term)
        bound += mag * (np.abs(np.where(np.isfinite(lt), lt, 0.0)) + k * np.abs(theta) + 4.0 + n)
        if k == n - 1:
            bound = _EPS * bound + mag
    return total, bound


# ---------------------------------------------------------------------------
# optimal parabolic contour


def _opc_params_bounded(t, phi_j, phi_j1, pj, qj, log_epsilon):
    fac = 1.01
    f_max = math.exp(log_epsilon - _LOG_EPS)
    sq_j = math.sqrt(phi_j)
    threshold = 2 * math.sqrt((log_epsilon - _LOG_EPS) / t)
    sq_j1 = min(math.sqrt(phi_j1), threshold - sq_j)
    f_bar = None
    if pj < 1e-14 and qj < 1e-14:
        sb_j, sb_j1, f_bar = sq_j, sq_j1, 1.0
    elif pj < 1e-14:
        sb_j = sq_j
        f_min = fac * (sq_j / (sq_j1 - sq_j)) ** qj if sq_j > 0 else fac
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fq = f_bar ** (-1 / qj)
            sb_j1 = (2 * sq_j1 - fq * sq_j) / (2 + fq)
    elif qj < 1e-14:
        sb_j1 = sq_j1
        f_min = fac * (sq_j1 / (sq_j1 - sq_j)) ** pj
        if f_min < f_max:
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1 / pj)
            sb_j = (2 * sq_j + fp * sq_j1) / (2 - fp)
    else:
        f_min = fac * (sq_j + sq_j1) / (sq_j1 - sq_j) ** max(pj, qj)
        if f_min < f_max:
            f_min = max(f_min, 1.5)
            f_bar = f_min + f_min / f_max * (f_max - f_min)
            fp = f_bar ** (-1 / pj)
            fq = f_bar ** (-1 / qj)
            w = -phi_j1 * t / log_epsilon
            den = 2 + w - (1 + w) * fp + fq
            sb_j = ((2 + w + fq) * sq_j + fp * sq_j1) / den
            sb_j1 = (-(1 + w) * fq * sq_j + (2 + w - (1 + w) * fp) * sq_j1) / den
    if f_bar is None:
        return 0.0, 0.0, math.inf
    log_epsilon = log_epsilon - math.log(f_bar)
    w = -sb_j1 ** 2 * t / log_epsilon
    mu = (((1 + w) * sb_j + sb_j1) / (2 + w)) ** 2
    h = -2 * math.pi / log_epsilon * (sb_j1 - sb_j) / ((1 + w) * sb_j + sb_j1)
    n = math.ceil(math.sqrt(1 - log_epsilon / t / mu) / h)
    return mu, h, n


def _opc_params_unbounded(t, phi_j, pj, log_epsilon):
    sq_phi = math.sqrt(phi_j)
    phib = phi_j * 1.01 if phi_j > 0 else 0.01
    sq_phib = math.sqrt(phib)
    f_min, f_max, f_tar = 1.0, 10.0, 5.0
    for _ in range(200):
        phi_t = phib * t
        lep = log_epsilon / phi_t
        n = math.ceil(phi_t / math.pi * (1 - 3 * lep / 2 + math.sqrt(1 - 2 * lep)))
        a = math.pi * n / phi_t
        sq_mu = sq_phib * abs(4 - a) / abs(7 - math.sqrt(1 + 12 * a))
        fbar = ((sq_phib - sq_phi) / sq_mu) ** (-pj)
        if pj < 1e-14 or f_min < fbar < f_max:
            break
        sq_phib = f_tar ** (-1 / pj) * sq_mu + sq_phi
        phib = sq_phib ** 2
    mu = sq_mu ** 2
    h = (-3 * a - 2 + 2 * math.sqrt(1 + 12 * a)) / (4 - a) / n
    threshold = (log_epsilon - _LOG_EPS) / t
    if mu > threshold:
        q = 0.0 if abs(pj) < 1e-14 else f_tar ** (-1 / pj) * math.sqrt(mu)
        phib = (q + math.sqrt(phi_j)) ** 2
        if phib < threshold:
            w = math.sqrt(_LOG_EPS / (_LOG_EPS - log_epsilon))
            u = math.sqrt(-phib * t / _LOG_EPS)
            mu = threshold
            n = math.ceil(w * log_epsilon / 2 / math.pi / (u * w - 1))
            h = math.sqrt(_LOG_EPS / (_LOG_EPS - log_epsilon)) / n
        else:
            n, h = math.inf, 0.0
    return mu, h, n


def _poles(alpha, z):
    """Singularities ``z**(1/alpha) * exp(2 pi i k / alpha)`` on the principal sheet."""
    theta = cmath.phase(z)
    kmin = math.ceil(-alpha / 2 - theta / (2 * math.pi))
    kmax = math.floor(alpha / 2 - theta / (2 * math.pi))
    k = np.arange(kmin, kmax + 1)
    return abs(z) ** (1 / alpha) * np.exp(1j * (theta + 2 * math.pi * k) / alpha)


def _residues(alpha, beta, s):
    if s.size == 0:
        return 0j
    if np.max(s.real, initial=-np.inf) > 709.0:
        raise MLEvaluationError("pole contribution overflows double precision")
    return complex(np.sum(s ** (1 - beta) * np.exp(s)) / alpha)


def _eval_contour(alpha, beta, z, log_epsilon=math.log(1e-15)):
    s_star = _poles(alpha, z)
    phi = (s_star.real + np.abs(s_star)) / 2
    order = np.argsort(phi, kind="stable")
    phi, s_star = phi[order], s_star[order]
    keep = phi > 1e-15
    s_star = np.concatenate([[0j], s_star[keep]])
    phi = np.concatenate([[0.0], phi[keep], [np.inf]])
    n_sing = len(s_star)
    p = np.concatenate([[max(0.0, -2 * (alpha - beta + 1))], np.ones(n_sing - 1)])
    q = np.concatenate([np.ones(n_sing - 1), [np.inf]])
    regions = [j for j in range(n_sing)
               if phi[j] < log_epsilon - _LOG_EPS and phi[j] < phi[j + 1]]
    while True:
        params = {}
        for j in regions:
            if j < n_sing - 1:
                params[j] = _opc_params_bounded(1.0, phi[j], phi[j + 1], p[j], q[j], log_epsilon)
            else:
                params[j] = _opc_params_unbounded(1.0, phi[j], p[j], log_epsilon)
        if min(v[2] for v in params.values()) <= 200 or log_epsilon > math.log(1e-6):
            break
        log_epsilon += math.log(10)
    jbest = min(params, key=lambda j: params[j][2])
    mu, h, n = params[jbest]
    if not math.isfinite(n):
        raise MLEvaluationError(f"no admissible contour for z={z!r}")
    u = h * np.arange(-n, n + 1)
    s = mu * (1j * u + 1) ** 2
    ds = 2 * mu * (1j - u)
    with np.errstate(over="ignore", invalid="ignore"):
        integrand = np.exp(s) * s ** (alpha - beta) / (s ** alpha - z) * ds
    value = h * complex(np.sum(integrand)) / (2j * math.pi)
    value += _residues(alpha, beta, s_star[jbest + 1:])
    if not cmath.isfinite(value):
        raise MLEvaluationError(f"contour quadrature overflowed at z={z!r}")
    err = 10 * math.exp(log_epsilon) * max(1.0, abs(value))
    return value, err


# ---------------------------------------------------------------------------
# large-argument expansion


def _eval_asymptotic(alpha, beta, z):
    value = _residues(alpha, beta, _poles(alpha, z))
    k = np.arange(1, 101)
    logz = cmath.log(z)
    terms = -np.exp(-k * logz) * rgamma(beta - alpha * k)
    # |1/Gamma(x)| <= Gamma(1 - x) / pi bounds every term; 1/Gamma itself can
    # vanish at isolated k, so truncate where this envelope is smallest
    log_env = -k * logz.real + gammaln(1 + alpha * k - beta) - math.log(math.pi)
    cut = int(np.argmin(log_env))
    value += complex(np.sum(terms[:cut]))
    return value, math.exp(log_env[cut]) + _EPS * abs(value)


# ---------------------------------------------------------------------------
# public scalar / vector API


def eval_scalar(params: MLParams, z: complex, method: str = "auto") -> MLResult:
    """Evaluate :math:`E_{\\alpha,\\beta}(z)` for a single complex ``z``.

    Parameters
    ----------
    params : MLParams
    z : complex
    method : {"auto", "series", "integral", "asymptotic"}
        Forcing a regime is meant for cross-checks; ``"asymptotic"`` is
        only accepted for ``|z| > 5``.

    Raises
    ------
    ValueError
        Non-finite ``z`` or unknown ``method``.
    MLEvaluationError
        In ``"auto"`` mode, when the error estimate exceeds
        ``1e-10 * max(1, |value|)``. The exception carries the partial value.
    """
    z = complex(z)
    if not cmath.isfinite(z):
        raise ValueError(f"z must be finite, got {z!r}")
    a, b = params.alpha, params.beta
    if method == "auto":
        if a == 1.0 and b == 1.0:
            v = cmath.exp(z)
            return MLResult(v, Regime.SERIES, _EPS * abs(v))
        if abs(z) <= SERIES_RADIUS:
            method = "series"
        elif in_growth_sector(a, z):
            v, err = _eval_asymptotic(a, b, z)
            if err <= _ASYMPTOTIC_RTOL * abs(v):
                return MLResult(v, Regime.ASYMPTOTIC, err)
            method = "integral"
        else:
            method = "integral"
        strict = True
    else:
        strict = False
    if method == "series":
        v, err = _eval_series(a, b, z)
        regime = Regime.SERIES
    elif method == "integral":
        v, err = _eval_contour(a, b, z)
        regime = Regime.INTEGRAL
    elif method == "asymptotic":
        if abs(z) <= SERIES_RADIUS:
            raise ValueError("the asymptotic regime requires |z| > 5")
        v, err = _eval_asymptotic(a, b, z)
        regime = Regime.ASYMPTOTIC
    else:
        raise ValueError(f"unknown method {method!r}")
    if strict and not err <= _CONTRACT_RTOL * max(1.0, abs(v)):
        raise MLEvaluationError(
            f"E_{{{a},{b}}}({z}) error estimate {err:.3e} above target", v, err)
    return MLResult(v, regime, float(err))


def mittag_leffler(z, alpha: float, beta: float = 1.0) -> np.ndarray:
    """Vectorised :math:`E_{\\alpha,\\beta}` in double precision.

    Points with ``|z| <= 5`` use the series when its rounding bound is below
    ``1e-12 * |E|``; every other point goes through the contour or asymptotic
    regime exactly as in :func:`eval_scalar`. No extended precision is used,
    so the accuracy target is absolute, about ``1e-13 * max(1, |E|)``.
    """
    params = MLParams(alpha, beta)
    a, b = params.alpha, params.beta
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("z must be finite")
    if a == 1.0 and b == 1.0:
        return np.exp(z)
    flat = z.ravel()
    out = np.empty_like(flat)
    done = np.zeros(flat.shape, dtype=bool)
    small = np.abs(flat) <= SERIES_RADIUS
    if small.any():
        vals, bound = _series_vec(a, b, flat[small])
        ok = bound <= _DOUBLE_SERIES_RTOL * np.maximum(np.abs(vals), 1e-300)
        ok |= bound <= 1e-15 * np.maximum(1.0, np.abs(vals))
        idx = np.nonzero(small)[0]
        out[idx[ok]] = vals[ok]
        done[idx[ok]] = True
    for i in np.nonzero(~done)[0]:
        zi = complex(flat[i])
        if abs(zi) > SERIES_RADIUS and in_growth_sector(a, zi):
            v, err = _eval_asymptotic(a, b, zi)
            if err <= _ASYMPTOTIC_RTOL * abs(v):
                out[i] = v
                continue
        out[i] = _eval_contour(a, b, zi)[0]
    return out.reshape(z.shape)


def _gll_integral(alpha, beta, z):
    """Real-line integral left after removing the dominant pole term.

    Valid for ``|arg z| < alpha*pi`` and ``beta < 1 + alpha`` (Gorenflo,
    Loutchko and Luchko, 2002).
    """
    s1 = math.sin(math.pi * (1 - beta))
    s2 = math.sin(math.pi * (1 - beta + alpha))
    ca = math.cos(alpha * math.pi)
    scale = 1.0 / (alpha * math.pi)
    z2 = z * z

    def integrand(r):
        w = scale * r ** ((1 - beta) / alpha) * math.exp(-r ** (1 / alpha))
        return w * (r * s1 - z * s2) / (r * r - 2 * r * z * ca + z2)

    upper = 45.0 ** alpha
    val, err, info = integrate.quad_vec(integrand, 0.0, upper, epsabs=1e-15,
                                        epsrel=1e-13, norm="max", limit=4000,
                                        full_output=True)
    # status 2 (rounding limit) is acceptable once the error estimate is small
    if not np.all(np.isfinite(val)) or err > 1e-11:
        raise MLEvaluationError("remainder integral did not converge", None, float(err))
    return val


def ml_remainder(z, alpha: float, beta: float = 1.0) -> np.ndarray:
    """``E_{alpha,beta}(z) - z**((1-beta)/alpha) * exp(z**(1/alpha)) / alpha``.

    Defined on the closed growth sector ``|arg z| <= alpha*pi/2`` (including
    ``z = 0``), for ``beta < 1 + alpha``. Where the exponential term is
    small the difference is formed directly; elsewhere it comes from a
    cancellation-free real integral, so the result keeps absolute accuracy
    near 1e-15 no matter how large ``E`` itself is.
    """
    params = MLParams(alpha, beta)
    a, b = params.alpha, params.beta
    if not b < 1 + a:
        raise ValueError("ml_remainder requires beta < 1 + alpha")
    z = np.asarray(z, dtype=complex)
    arg = np.abs(np.angle(z))
    if np.any((z != 0) & (arg > a * np.pi / 2 * (1 + 1e-12))):
        raise ValueError("ml_remainder is only defined on the growth sector")
    if a == 1.0 and b == 1.0:
        return np.zeros(z.shape, dtype=complex)
    flat = z.ravel()
    with np.errstate(over="ignore", invalid="ignore"):
        lead = principal_power(flat, (1 - b) / a) * np.exp(principal_power(flat, 1 / a)) / a
    lead = np.atleast_1d(lead)
    direct = np.isfinite(lead) & (np.abs(lead) <= _DIRECT_REMAINDER_MAX)
    out = np.empty_like(flat)
    if direct.any():
        out[direct] = mittag_leffler(flat[direct], a, b) - lead[direct]
    if (~direct).any():
        out[~direct] = _gll_integral(a, b, flat[~direct])
    return out.reshape(z.shape)


# ---------------------------------------------------------------------------
# large-time expansion checks


def _require_growth(alpha, lam):
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    if not in_growth_sector(alpha, lam):
        raise ValueError(
            f"lambda={lam!r} is outside the sector |arg| < alpha*pi/2 for alpha={alpha}")


def asymptotic_approx(alpha: float, lam: complex, t: float) -> tuple[complex, complex]:
    """Leading large-time terms of ``E_alpha(lam t^alpha)`` and of its kernel.

    Returns ``(exp(lam**(1/alpha) t)/alpha, lam**(1/alpha-1) exp(lam**(1/alpha) t)/alpha)``.
    """
    lam = complex(lam)
    _require_growth(alpha, lam)
    if not t > 0:
        raise ValueError("t must be positive")
    root = principal_power(lam, 1 / alpha)
    approx_e = cmath.exp(root * t) / alpha
    approx_kernel = principal_power(lam, 1 / alpha - 1) * approx_e
    return approx_e, approx_kernel


def residual_lemma3(alpha: float, lam: complex, t_grid) -> AsymptoticBound:
    """Fit ``(t0, m)`` so that both scaled expansion residuals stay below ``m``.

    The residuals are ``t^a |E_a(lam t^a) - exp(lam^(1/a) t)/a|`` and
    ``t^(a+1) |t^(a-1) E_{a,a}(lam t^a) - lam^(1/a-1) exp(lam^(1/a) t)/a|``.
    Samples with ``|lam| t^a < 1`` are discarded; ``t0`` is the first sample
    kept and ``m`` is 1.1 times the largest residual seen.
    """
    lam = complex(lam)
    _require_growth(alpha, lam)
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be a non-empty ascending list of positive times")
    t = t[abs(lam) * t ** alpha >= EXPANSION_MIN_ARGUMENT]
    if t.size == 0:
        raise ValueError("no asymptotic samples: every grid point lies below the threshold")
    z = lam * t ** alpha
    res_e = t ** alpha * np.abs(ml_remainder(z, alpha, 1.0))
    res_k = t ** (2 * alpha) * np.abs(ml_remainder(z, alpha, alpha))
    m = 1.1 * float(max(res_e.max(), res_k.max()))
    return AsymptoticBound(float(t[0]), m, t, res_e, res_k)


# ---------------------------------------------------------------------------
# matrix argument


def _cluster_labels(ev: np.ndarray, tol: float) -> list[int]:
    n = len(ev)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(ev[i] - ev[j]) <= tol:
                parent[find(j)] = find(i)
    roots: dict[int, int] = {}
    return [roots.setdefault(find(i), len(roots)) for i in range(n)]


def _swap_schur(T, Q, k):
    t11, t22, t12 = T[k, k], T[k + 1, k + 1], T[k, k + 1]
    v = np.array([t12, t22 - t11])
    nv = np.linalg.norm(v)
    if nv == 0:
        return
    c, s = v / nv
    G = np.array([[c, -np.conj(s)], [s, np.conj(c)]])
    T[:, k:k + 2] = T[:, k:k + 2] @ G
    T[k:k + 2, :] = G.conj().T @ T[k:k + 2, :]
    Q[:, k:k + 2] = Q[:, k:k + 2] @ G
    T[k + 1, k] = 0.0


def _taylor_block(params: MLParams, Tb: np.ndarray) -> np.ndarray:
    m = Tb.shape[0]
    if m == 1:
        return np.array([[eval_scalar(params, Tb[0, 0]).value]])
    sigma = complex(np.trace(Tb)) / m
    N = Tb - sigma * np.eye(m)
    n_nodes = 64
    nodes = sigma + np.exp(2j * np.pi * np.arange(n_nodes) / n_nodes)
    coeffs = np.fft.fft(mittag_leffler(nodes, params.alpha, params.beta)) / n_nodes
    F = eval_scalar(params, sigma).value * np.eye(m, dtype=complex)
    P = np.eye(m, dtype=complex)
    small = 0
    for k in range(1, n_nodes // 2):
        P = P @ N
        term = coeffs[k] * P
        F += term
        if k >= m and np.linalg.norm(term) <= 1e-16 * max(np.linalg.norm(F), 1e-300):
            small += 1
            if small == 2:
                return F
        else:
            small = 0
    spread = float(np.max(np.abs(np.diag(N))))
    raise MLEvaluationError(
        f"Taylor expansion about cluster mean {sigma:.6g} did not converge "
        f"(cluster spread {spread:.3e})", None, None)


def eval_matrix(params: MLParams, M) -> np.ndarray:
    """Matrix function :math:`E_{\\alpha,\\beta}(M)` by Schur-Parlett.

    The complex Schur form is reordered so that eigenvalues closer than
    ``1e-6 * ||M||`` sit in contiguous diagonal blocks; each block is
    expanded in a Taylor series about its mean and the off-diagonal blocks
    follow from the block Parlett recurrence (one Sylvester solve each).

    Raises
    ------
    ValueError
        Empty, non-square or non-finite ``M``.
    ClusterError
        Two clusters are separated by less than ten times the clustering
        tolerance, so neither merging nor separating them is reliable.
    """
    M = np.array(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be a square matrix")
    n = M.shape[0]
    if n == 0:
        raise ValueError("M must have positive dimension")
    if not np.all(np.isfinite(M)):
        raise ValueError("M must have finite entries")
    if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
        return np.diag([eval_scalar(params, m).value for m in np.diag(M)])
    T, Q = linalg.schur(M, output="complex")
    ev = np.diag(T).copy()
    tol = CLUSTER_RTOL * np.linalg.norm(M, 2)
    labels = _cluster_labels(ev, tol)
    n_clusters = max(labels) + 1
    for ci in range(n_clusters):
        for cj in range(ci + 1, n_clusters):
            gap = min(abs(ev[i] - ev[j]) for i in range(n) if labels[i] == ci
                      for j in range(n) if labels[j] == cj)
            if gap <= 10 * tol:
                raise ClusterError(
                    f"eigenvalue clusters {ci} and {cj} are {gap:.3e} apart, "
                    f"within 10x the clustering tolerance {tol:.3e}")
    order = list(labels)
    for sweep in range(n):
        swapped = False
        for k in range(n - 1):
            if order[k] > order[k + 1]:
                _swap_schur(T, Q, k)
                order[k], order[k + 1] = order[k + 1], order[k]
                swapped = True
        if not swapped:
            break
    starts = [0] + [k for k in range(1, n) if order[k] != order[k - 1]] + [n]
    blocks = [slice(starts[i], starts[i + 1]) for i in range(len(starts) - 1)]
    F = np.zeros_like(T)
    for bj in blocks:
        F[bj, bj] = _taylor_block(params, T[bj, bj])
    for j, bj in enumerate(blocks):
        for i in range(j - 1, -1, -1):
            bi = blocks[i]
            rhs = F[bi, bi] @ T[bi, bj] - T[bi, bj] @ F[bj, bj]
            for kk in range(i + 1, j):
                bk = blocks[kk]
                rhs += F[bi, bk] @ T[bk, bj] - T[bi, bk] @ F[bk, bj]
            F[bi, bj] = linalg.solve_sylvester(T[bi, bi], -T[bj, bj], rhs)
    return Q @ F @ Q.conj().T
