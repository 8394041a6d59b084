"""Independent test oracles shared across test modules.

These deliberately re-derive results from first principles (dense
linear algebra, exhaustive enumeration) so the production code paths
are checked against something they do not share code with.
"""

import numpy as np


def dense_sandwich_se(data, fit):
    """Treatment-coefficient SE from a fully dense sandwich construction.

    Builds the per-sample stacked estimating equations and the full
    Jacobian elementwise from the same-block rule (the derivative of an
    equation block with respect to another block's parameters is zero),
    inverts the whole matrix densely, and never uses the block
    structure.
    """
    n, d = data.n, data.d
    p = d + 2
    m = (d + 1) * p
    x = np.column_stack([np.ones(n), data.a, data.z])
    alpha = fit.alpha_hat.reshape(d, p).T
    s_hat = x @ alpha
    s_design = np.column_stack([np.ones(n), data.a, s_hat])
    # term[i, k] is the regressor multiplying coordinate k of the stacked
    # equations for sample i; identical tables drive psi and the jacobian.
    term = np.empty((n, m))
    for j in range(d):
        term[:, j * p:(j + 1) * p] = x
    term[:, d * p:] = s_design
    resid = np.empty((n, m))
    r_first = data.w - s_hat
    e_second = data.y - s_design @ fit.beta_hat
    for j in range(d):
        resid[:, j * p:(j + 1) * p] = r_first[:, j:j + 1]
    resid[:, d * p:] = e_second[:, None]
    psi = term * resid
    block = np.repeat(np.arange(d + 1), p)
    same_block = (block[:, None] == block[None, :]).astype(float)
    a_mat = -(term.T @ term) / n * same_block
    b_mat = psi.T @ psi / n
    a_inv = np.linalg.inv(a_mat)
    v_mat = a_inv @ b_mat @ a_inv.T
    idx = d * p + 1
    return float(np.sqrt(v_mat[idx, idx] / n))


_MASK_CACHE = {}


def _masks(k):
    if k not in _MASK_CACHE:
        _MASK_CACHE[k] = ((np.arange(1 << k)[:, None] >> np.arange(k)) & 1).astype(bool)
    return _MASK_CACHE[k]


def max_self_consistent_set(values, alpha, kind):
    """Exhaustive maximum self-consistent set over all 2^K subsets.

    Self-consistent sets are closed under union, so the union of every
    self-consistent subset is the unique maximum one.
    """
    values = np.asarray(values, dtype=float)
    k = values.size
    masks = _masks(k)
    sizes = masks.sum(axis=1)
    with np.errstate(divide="ignore"):
        if kind == "p":
            ok = values[None, :] <= alpha * sizes[:, None] / k
        else:
            cutoff = np.where(sizes > 0, k / (alpha * np.maximum(sizes, 1)),
                              np.inf)
            ok = values[None, :] >= cutoff[:, None]
    valid = np.all(ok | ~masks, axis=1)
    union = np.any(masks[valid], axis=0)
    return frozenset(np.nonzero(union)[0].tolist())
