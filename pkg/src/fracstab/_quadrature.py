"""Product-rectangle quadrature for Mittag-Leffler convolution kernels on uniform grids."""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from .mlf import mittag_leffler


def uniform_step(t: np.ndarray) -> float:
    """Step of a uniform grid starting at 0; rejects anything else."""
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
        raise ValueError("grid must be one-dimensional, start at 0 and hold at least two points")
    h = (t[-1] - t[0]) / (t.size - 1)
    if not h > 0 or np.max(np.abs(np.diff(t) - h)) > 1e-9 * max(h, 1e-300) * t.size:
        raise ValueError("only uniform grids are supported")
    return float(h)


def kernel_antiderivative(alpha: float, mu: complex, s: np.ndarray) -> np.ndarray:
    """``s^alpha E_{alpha,alpha+1}(mu s^alpha)``, the antiderivative of the resolvent kernel."""
    s = np.asarray(s, dtype=float)
    sa = s ** alpha
    return sa * mittag_leffler(mu * sa, alpha, alpha + 1.0)


def product_weights(alpha: float, mu: complex, h: float, n: int) -> np.ndarray:
    """Exact cell integrals of ``s^(alpha-1) E_{alpha,alpha}(mu s^alpha)`` over ``[m h, (m+1) h]``."""
    F = kernel_antiderivative(alpha, mu, h * np.arange(n + 1))
    return np.diff(F)


def cell_average(g: np.ndarray) -> np.ndarray:
    """Midpoint values ``(g_j + g_{j+1}) / 2`` along the first axis."""
    g = np.asarray(g)
    return 0.5 * (g[1:] + g[:-1])


def convolve_rows(alpha: float, mu: np.ndarray, h: float, g: np.ndarray) -> np.ndarray:
    """``int_0^t (t-s)^(alpha-1) E_{alpha,alpha}(mu_i (t-s)^alpha) g_i(s) ds`` at every grid time.

    ``g`` has shape ``(n+1, d)`` (values on the grid); data are replaced by
    their cell averages and the kernel is integrated exactly per cell.
    Row 0 of the result (t = 0) is zero.
    """
    g = np.asarray(g, dtype=complex)
    n = g.shape[0] - 1
    gbar = cell_average(g)
    out = np.zeros_like(g)
    for i, m in enumerate(np.atleast_1d(mu)):
        W = product_weights(alpha, complex(m), h, n)
        if not np.any(gbar[:, i]):
            continue
        out[1:, i] = fftconvolve(W, gbar[:, i])[:n]
    return out
