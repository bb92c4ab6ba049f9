# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled greedy coincidence matcher (see ``_matching_py`` for the reference)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def greedy_match(const double[::1] ta, const double[::1] tb, double window):
    cdef Py_ssize_t na = ta.shape[0], nb = tb.shape[0]
    cdef Py_ssize_t i = 0, j = 0, k = 0
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ia = np.empty(min(na, nb), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ib = np.empty(min(na, nb), dtype=np.int64)
    cdef cnp.int64_t[::1] ia_v = ia
    cdef cnp.int64_t[::1] ib_v = ib
    cdef double a, b, d
    with nogil:
        while i < na and j < nb:
            a = ta[i]
            b = tb[j]
            d = a - b
            if d < 0:
                d = -d
            if d < window:
                ia_v[k] = i
                ib_v[k] = j
                k += 1
                i += 1
                j += 1
            elif a < b:
                i += 1
            else:
                j += 1
    return ia[:k], ib[:k]
