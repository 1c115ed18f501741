# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled posting-list scan; see _scan_py.py for the reference loop."""


def scan(
    const long long[::1] indptr,
    const int[::1] rows,
    const double[::1] weights,
    const long long[::1] q_cols,
    const double[::1] q_weights,
    double[::1] out,
):
    cdef Py_ssize_t k, j
    cdef long long col, lo, hi
    cdef double q_weight
    for k in range(q_cols.shape[0]):
        col = q_cols[k]
        q_weight = q_weights[k]
        lo = indptr[col]
        hi = indptr[col + 1]
        for j in range(lo, hi):
            out[rows[j]] += q_weight * weights[j]
