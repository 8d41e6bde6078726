"""State-space norm shared by every module.

The max-modulus norm is used on C^d throughout: with it, a row-wise bound
``|h^i(x) - h^i(y)| <= l_h * ||x - y||`` lifts to the full operator by taking
the maximum over rows, which is how the contraction constant is assembled.
"""

from __future__ import annotations

import numpy as np


def state_norm(x: np.ndarray) -> np.ndarray | float:
    """Max-modulus norm over the last axis."""
    x = np.asarray(x)
    if x.ndim == 0:
        return float(abs(x))
    out = np.max(np.abs(x), axis=-1)
    return float(out) if np.ndim(out) == 0 else out
