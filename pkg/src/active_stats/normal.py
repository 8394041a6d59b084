"""Standard normal CDF, quantile and density helpers.

Thin wrappers over scipy's erfc-based implementations; accuracy is far
inside the 1e-10 target this library needs (verified against mpmath in
the test suite).  All functions accept scalars or arrays.
"""

from __future__ import annotations

import numpy as np
from scipy import special

_SQRT2 = np.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def normal_cdf(x):
    """Phi(x) via the complementary error function."""
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / _SQRT2)


def normal_sf(x):
    """1 - Phi(x), computed without cancellation."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / _SQRT2)


def normal_quantile(p):
    """Phi^{-1}(p); +-inf at the endpoints, NaN outside [0, 1]."""
    return special.ndtri(np.asarray(p, dtype=float))


def normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI)


def normal_logpdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * x * x - _LOG_SQRT_2PI
