# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Cython implementation of the estimating-equation Gram kernel.

Fuses the per-sample stacked-equation build with the rank-one Gram
update, so the n x m stacked matrix is never materialized.  Sequential
accumulation keeps results byte-identical across runs.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def psi_gram(x_design, s_design, resid_first, resid_second):
    """Same contract as the numpy fallback: returns (X'X, S'S, B-sum)."""
    cdef double[:, ::1] x = np.ascontiguousarray(x_design, dtype=np.float64)
    cdef double[:, ::1] s = np.ascontiguousarray(s_design, dtype=np.float64)
    cdef double[:, ::1] r = np.ascontiguousarray(resid_first, dtype=np.float64)
    cdef double[::1] e = np.ascontiguousarray(resid_second, dtype=np.float64)

    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t p = x.shape[1]
    cdef Py_ssize_t d = r.shape[1]
    cdef Py_ssize_t m = (d + 1) * p

    xtx_arr = np.zeros((p, p), dtype=np.float64)
    sts_arr = np.zeros((p, p), dtype=np.float64)
    bsum_arr = np.zeros((m, m), dtype=np.float64)
    buf_arr = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] xtx = xtx_arr
    cdef double[:, ::1] sts = sts_arr
    cdef double[:, ::1] bsum = bsum_arr
    cdef double[::1] buf = buf_arr

    cdef Py_ssize_t i, j, k, a, b
    cdef double va, ei

    for i in range(n):
        for j in range(d):
            for k in range(p):
                buf[j * p + k] = x[i, k] * r[i, j]
        ei = e[i]
        for k in range(p):
            buf[d * p + k] = s[i, k] * ei
        for a in range(m):
            va = buf[a]
            if va != 0.0:
                for b in range(a, m):
                    bsum[a, b] += va * buf[b]
        for a in range(p):
            for b in range(a, p):
                xtx[a, b] += x[i, a] * x[i, b]
                sts[a, b] += s[i, a] * s[i, b]

    # mirror the upper triangles
    for a in range(m):
        for b in range(a + 1, m):
            bsum[b, a] = bsum[a, b]
    for a in range(p):
        for b in range(a + 1, p):
            xtx[b, a] = xtx[a, b]
            sts[b, a] = sts[a, b]

    return xtx_arr, sts_arr, bsum_arr
