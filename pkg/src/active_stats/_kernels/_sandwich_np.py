"""Numpy implementation of the estimating-equation Gram kernel."""

import numpy as np


def psi_gram(x_design, s_design, resid_first, resid_second):
    """Accumulate the Gram matrices of the stacked estimating equations.

    Per sample the stacked equation vector is the concatenation of
    x * r_j for each first-stage residual column r_j followed by
    s * e for the second stage.  Returns raw (unscaled) sums:
    X'X, S'S and the m x m outer-product sum of the stacked vectors,
    with m = (d + 1) * p.
    """
    x = np.ascontiguousarray(x_design, dtype=float)
    s = np.ascontiguousarray(s_design, dtype=float)
    r = np.ascontiguousarray(resid_first, dtype=float)
    e = np.ascontiguousarray(resid_second, dtype=float)
    n, p = x.shape
    d = r.shape[1]
    m = (d + 1) * p
    psi = np.empty((n, m), dtype=float)
    for j in range(d):
        np.multiply(x, r[:, j:j + 1], out=psi[:, j * p:(j + 1) * p])
    np.multiply(s, e[:, None], out=psi[:, d * p:])
    xtx = x.T @ x
    sts = s.T @ s
    bsum = psi.T @ psi
    return xtx, sts, bsum
