# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled filter kernels: the hot path behind interactive slider drags.

Contracts mirror csn._kernels_py exactly (same packed-mask layout, same
bin-edge rule); csn.kernels selects whichever backend is importable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isnan

cnp.import_array()

BACKEND_NAME = "native"

ctypedef cnp.uint64_t u64

cdef extern from *:
    """
    static inline unsigned long long csn_popcount64(unsigned long long x) {
    #if defined(_MSC_VER)
        x = x - ((x >> 1) & 0x5555555555555555ULL);
        x = (x & 0x3333333333333333ULL) + ((x >> 2) & 0x3333333333333333ULL);
        x = (x + (x >> 4)) & 0x0f0f0f0f0f0f0f0fULL;
        return (x * 0x0101010101010101ULL) >> 56;
    #else
        return __builtin_popcountll(x);
    #endif
    }
    """
    unsigned long long csn_popcount64(unsigned long long x) nogil


def words_for(n):
    return (n + 63) >> 6


def bool_to_mask(passing):
    cdef const cnp.uint8_t[::1] p = np.ascontiguousarray(passing, dtype=np.uint8)
    cdef Py_ssize_t n = p.shape[0]
    out_arr = np.zeros((n + 63) >> 6, dtype=np.uint64)
    cdef u64[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(n):
        if p[i]:
            out[i >> 6] |= (<u64>1) << (i & 63)
    return out_arr


def mask_to_bool(words, n):
    cdef const u64[::1] w = words
    out_arr = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[::1] out = out_arr.view(np.uint8)
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = (w[i >> 6] >> (i & 63)) & 1
    return out_arr


def full_mask(n):
    cdef Py_ssize_t nwords = (n + 63) >> 6
    out_arr = np.full(nwords, np.uint64(0xFFFFFFFFFFFFFFFF), dtype=np.uint64)
    cdef u64[::1] out = out_arr
    cdef Py_ssize_t rem = n & 63
    if nwords and rem:
        out[nwords - 1] = ((<u64>1) << rem) - 1
    return out_arr


def empty_mask(n):
    return np.zeros((n + 63) >> 6, dtype=np.uint64)


def count_mask(words):
    cdef const u64[::1] w = words
    cdef Py_ssize_t i
    cdef unsigned long long total = 0
    with nogil:
        for i in range(w.shape[0]):
            total += csn_popcount64(w[i])
    return int(total)


def range_mask(const double[::1] values, double lo, double hi):
    """Packed mask of objects with a non-missing value inside [lo, hi]."""
    cdef Py_ssize_t n = values.shape[0]
    out_arr = np.zeros((n + 63) >> 6, dtype=np.uint64)
    cdef u64[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double v
    with nogil:
        for i in range(n):
            v = values[i]
            if v >= lo and v <= hi:  # NaN fails both
                out[i >> 6] |= (<u64>1) << (i & 63)
    return out_arr


def and_masks(masks):
    out_arr = np.array(masks[0], dtype=np.uint64, copy=True)
    cdef u64[::1] out = out_arr
    cdef const u64[::1] m
    cdef Py_ssize_t i, k
    for k in range(1, len(masks)):
        m = masks[k]
        with nogil:
            for i in range(out.shape[0]):
                out[i] &= m[i]
    return out_arr


cdef inline Py_ssize_t _bin_of(double v, const double[::1] edges, Py_ssize_t nbins, double invw) nogil:
    # Largest b with edges[b] <= v, capped at nbins-1; the arithmetic guess is
    # corrected against the edge array so binning and edge filters agree exactly.
    cdef Py_ssize_t b = <Py_ssize_t>((v - edges[0]) * invw)
    if b < 0:
        b = 0
    elif b > nbins - 1:
        b = nbins - 1
    while b > 0 and v < edges[b]:
        b -= 1
    while b < nbins - 1 and v >= edges[b + 1]:
        b += 1
    return b


def histogram_total(const double[::1] values, const double[::1] edges):
    """Counts per bin plus the missing-value count.

    Bin b is [edges[b], edges[b+1]) except the last, which is closed on the
    right; values outside [edges[0], edges[-1]] are not counted. A degenerate
    domain (all edges equal) puts every counted value in bin 0.
    """
    cdef Py_ssize_t nbins = edges.shape[0] - 1
    cdef Py_ssize_t n = values.shape[0]
    counts_arr = np.zeros(nbins, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef double lo = edges[0], hi = edges[nbins]
    cdef bint degenerate = hi == lo
    cdef double invw = 0.0
    if not degenerate:
        invw = nbins / (hi - lo)
    cdef Py_ssize_t i
    cdef long long missing = 0
    cdef double v
    with nogil:
        for i in range(n):
            v = values[i]
            if isnan(v):
                missing += 1
            elif lo <= v <= hi:
                counts[0 if degenerate else _bin_of(v, edges, nbins, invw)] += 1
    return counts_arr, int(missing)


def histogram_passing(const double[::1] values, const double[::1] edges, words):
    """histogram_total restricted to mask-true objects (missing not reported)."""
    cdef const u64[::1] w = words
    cdef Py_ssize_t nbins = edges.shape[0] - 1
    cdef Py_ssize_t n = values.shape[0]
    counts_arr = np.zeros(nbins, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef double lo = edges[0], hi = edges[nbins]
    cdef bint degenerate = hi == lo
    cdef double invw = 0.0
    if not degenerate:
        invw = nbins / (hi - lo)
    cdef Py_ssize_t i
    cdef double v
    with nogil:
        for i in range(n):
            if not (w[i >> 6] >> (i & 63)) & 1:
                continue
            v = values[i]
            if not isnan(v) and lo <= v <= hi:
                counts[0 if degenerate else _bin_of(v, edges, nbins, invw)] += 1
    return counts_arr


def count_missing_passing(const double[::1] values, words):
    """Mask-true objects whose value is missing."""
    cdef const u64[::1] w = words
    cdef Py_ssize_t i
    cdef long long total = 0
    with nogil:
        for i in range(values.shape[0]):
            if (w[i >> 6] >> (i & 63)) & 1 and isnan(values[i]):
                total += 1
    return int(total)
