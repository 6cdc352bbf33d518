# cython: boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled versions of the hot kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libcpp.algorithm cimport nth_element
from libcpp.vector cimport vector

cnp.import_array()


def accumulate(double[::1] out, rows, weights):
    cdef const long long[::1] r = np.ascontiguousarray(rows, dtype=np.int64).ravel()
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64).ravel()
    cdef Py_ssize_t t, n = r.shape[0]
    if w.shape[0] != n:
        raise ValueError("rows and weights differ in length")
    for t in range(n):
        out[r[t]] += w[t]


def gather_median(const double[::1] v, rows):
    cdef const long long[:, ::1] idx = np.ascontiguousarray(rows, dtype=np.int64)
    cdef Py_ssize_t n_rows = idx.shape[0], width = idx.shape[1], c, j
    res = np.empty(n_rows, dtype=np.float64)
    cdef double[::1] out = res
    cdef vector[double] buf
    if width == 0:
        return res
    buf.resize(width)
    cdef Py_ssize_t mid = (width - 1) // 2
    for c in range(n_rows):
        for j in range(width):
            buf[j] = v[idx[c, j]]
        nth_element(buf.begin(), buf.begin() + mid, buf.end())
        out[c] = buf[mid]
    return res


def two_layer_scatter(double[::1] out, const int[:, ::1] g, const int[:, :, ::1] h,
                      const unsigned char[:, :, ::1] bits, bcol, idx, coef, long long B2):
    cdef const long long[::1] bc = np.ascontiguousarray(bcol, dtype=np.int64)
    cdef const long long[::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const double[::1] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t d1 = h.shape[0], d2 = h.shape[1], coded = bits.shape[1]
    cdef Py_ssize_t t, r, j, jj, nt = ix.shape[0]
    cdef long long base
    cdef vector[int] first
    first.resize(nt)
    # one second-layer segment at a time keeps the writes cache-resident
    for r in range(d1):
        for t in range(nt):
            first[t] = g[r, ix[t]]
        for j in range(d2):
            base = (r * d2 + j) * B2
            jj = j % coded
            for t in range(nt):
                out[(base + h[r, j, first[t]]) * 2 + bits[r, jj, bc[t]]] += cf[t]


def two_layer_bucket_counts(const double[::1] v, const int[:, :, ::1] h, long long B2,
                            double thr, bint strict):
    cdef Py_ssize_t d1 = h.shape[0], d2 = h.shape[1], B1 = h.shape[2]
    cdef Py_ssize_t r, j, b
    cdef long long p
    res = np.zeros((d1, B1), dtype=np.int32)
    cdef int[:, ::1] out = res
    cdef vector[unsigned char] seg
    seg.resize(B2)
    cdef double a
    for r in range(d1):
        for j in range(d2):
            for b in range(B2):
                p = 2 * ((r * d2 + j) * B2 + b)
                a = fabs(v[p] + v[p + 1])
                seg[b] = (a > thr) if strict else (a >= thr)
            for b in range(B1):
                out[r, b] += seg[h[r, j, b]]
    return res


def two_layer_pair_bits(const double[::1] v, const int[:, :, ::1] h, long long B2,
                        reps, buckets, double ambiguity):
    cdef const long long[::1] rs = np.ascontiguousarray(reps, dtype=np.int64)
    cdef const long long[::1] bs = np.ascontiguousarray(buckets, dtype=np.int64)
    cdef Py_ssize_t n_rows = rs.shape[0], d2 = h.shape[1], c, j
    cdef long long p
    cdef double a, b, hi, lo
    bits_arr = np.empty((n_rows, d2), dtype=np.uint8)
    erased_arr = np.empty((n_rows, d2), dtype=np.uint8)
    cdef unsigned char[:, ::1] bits = bits_arr
    cdef unsigned char[:, ::1] erased = erased_arr
    for c in range(n_rows):
        for j in range(d2):
            p = ((rs[c] * d2 + j) * B2 + h[rs[c], j, bs[c]]) * 2
            a = fabs(v[p])
            b = fabs(v[p + 1])
            bits[c, j] = 1 if a < b else 0
            hi = a if a > b else b
            lo = b if a > b else a
            erased[c, j] = 1 if (hi == 0.0 or lo > ambiguity * hi) else 0
    return bits_arr, erased_arr


def block_sign_scatter(double[::1] out, const unsigned char[:, ::1] offsets,
                       const signed char[:, ::1] signs, idx, coef, long long block, double scale):
    cdef const long long[::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const double[::1] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t p = offsets.shape[0], t, c, nt = ix.shape[0]
    cdef long long i
    for t in range(p):
        for c in range(nt):
            i = ix[c]
            out[t * block + offsets[t, i]] += signs[t, i] * cf[c] * scale


def rs_scatter(double[::1] out, digits, coef, long long q):
    cdef const long long[:, ::1] dg = np.ascontiguousarray(digits, dtype=np.int64)
    cdef const double[::1] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t L = dg.shape[0], nc = dg.shape[1], c, t
    cdef long long alpha, acc
    for c in range(nc):
        for alpha in range(q):
            acc = 0
            for t in range(L - 1, -1, -1):
                acc = (acc * alpha + dg[t, c]) % q
            out[alpha * q + acc] += cf[c]
