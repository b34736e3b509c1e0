# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  Semantics are mirrored exactly by ``_fallback``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil

cnp.import_array()


def correlate(const long long[::1] a, const long long[::1] b,
              double lo, double bin_ticks, Py_ssize_t nbins):
    """Histogram of b[j] - a[i] over bins [lo + k*bin_ticks, lo + (k+1)*bin_ticks).

    Both inputs must be sorted.  Two-pointer sweep, O(N * pairs per window).
    """
    cdef cnp.ndarray[cnp.int64_t, ndim=1] hist = np.zeros(nbins, dtype=np.int64)
    cdef long long[::1] h = hist
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    cdef Py_ssize_t i, j, start = 0
    cdef long long clo = <long long>ceil(lo)
    cdef long long chi = <long long>floor(lo + nbins * bin_ticks)
    cdef long long ai, d
    cdef long long idx
    for i in range(na):
        ai = a[i]
        while start < nb and b[start] - ai < clo:
            start += 1
        j = start
        while j < nb:
            d = b[j] - ai
            if d > chi:
                break
            idx = <long long>floor((<double>d - lo) / bin_ticks)
            if 0 <= idx < nbins:
                h[idx] += 1
            j += 1
    return hist


def dead_time_mask(const double[::1] t, double dead):
    """Greedy non-paralysable dead time: keep t[i] if t[i] - last_kept >= dead."""
    cdef Py_ssize_t n = t.shape[0], i
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] keep = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] k = keep
    cdef double last
    if n == 0:
        return keep.view(bool)
    k[0] = 1
    last = t[0]
    for i in range(1, n):
        if t[i] - last >= dead:
            k[i] = 1
            last = t[i]
    return keep.view(bool)
