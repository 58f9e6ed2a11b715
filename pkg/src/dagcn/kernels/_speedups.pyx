# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled segment reductions for edge-list message passing.

These loops accumulate strictly in edge-array order, so results are
deterministic and bitwise identical to the numpy fallback.
"""

import numpy as np


def segment_sum(const double[:, ::1] values, const long long[::1] segments,
                Py_ssize_t n_segments):
    """Sum rows of `values` into `n_segments` buckets given by `segments`."""
    out_arr = np.zeros((n_segments, values.shape[1]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t e, j, s
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t dim = values.shape[1]
    for e in range(n):
        s = segments[e]
        for j in range(dim):
            out[s, j] += values[e, j]
    return out_arr


def segment_sum_1d(const double[::1] values, const long long[::1] segments,
                   Py_ssize_t n_segments):
    out_arr = np.zeros(n_segments, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t e
    cdef Py_ssize_t n = values.shape[0]
    for e in range(n):
        out[segments[e]] += values[e]
    return out_arr


def segment_max(const double[:, ::1] values, const long long[::1] segments,
                Py_ssize_t n_segments):
    """Columnwise max per segment; also returns the source row per maximum.

    Ties resolve to the first row in edge order. Empty segments keep -inf
    and source row -1.
    """
    out_arr = np.full((n_segments, values.shape[1]), -np.inf, dtype=np.float64)
    arg_arr = np.full((n_segments, values.shape[1]), -1, dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef long long[:, ::1] arg = arg_arr
    cdef Py_ssize_t e, j, s
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t dim = values.shape[1]
    for e in range(n):
        s = segments[e]
        for j in range(dim):
            if values[e, j] > out[s, j]:
                out[s, j] = values[e, j]
                arg[s, j] = e
    return out_arr, arg_arr
