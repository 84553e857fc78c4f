# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled float64 kernels mirroring interbench.kernels._pykernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp

cnp.import_array()


def cross_combine(const double[:, ::1] x0, const double[:, ::1] z,
                  const double[::1] b, const double[:, ::1] xl):
    cdef Py_ssize_t n = z.shape[0], d = z.shape[1], i, j
    out = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(d):
                o[i, j] = x0[i, j] * (z[i, j] + b[j]) + xl[i, j]
    return out


def cross_combine_backward(const double[:, ::1] g, const double[:, ::1] x0,
                           const double[:, ::1] z, const double[::1] b):
    cdef Py_ssize_t n = z.shape[0], d = z.shape[1], i, j
    gz_arr = np.empty((n, d), dtype=np.float64)
    gx0_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] gz = gz_arr
    cdef double[:, ::1] gx0 = gx0_arr
    with nogil:
        for i in range(n):
            for j in range(d):
                gz[i, j] = g[i, j] * x0[i, j]
                gx0[i, j] = g[i, j] * (z[i, j] + b[j])
    return gz_arr, gx0_arr


def layernorm_forward(const double[:, ::1] x, const double[::1] gamma,
                      const double[::1] beta, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], i, j
    cdef double mu, var, r, t
    y_arr = np.empty((n, d), dtype=np.float64)
    xhat_arr = np.empty((n, d), dtype=np.float64)
    rstd_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    with nogil:
        for i in range(n):
            mu = 0.0
            for j in range(d):
                mu += x[i, j]
            mu /= d
            var = 0.0
            for j in range(d):
                t = x[i, j] - mu
                var += t * t
            var /= d
            r = 1.0 / sqrt(var + eps)
            rstd[i] = r
            for j in range(d):
                t = (x[i, j] - mu) * r
                xhat[i, j] = t
                y[i, j] = t * gamma[j] + beta[j]
    return y_arr, xhat_arr, rstd_arr


def layernorm_backward(const double[:, ::1] g, const double[:, ::1] xhat,
                       const double[::1] rstd, const double[::1] gamma):
    cdef Py_ssize_t n = g.shape[0], d = g.shape[1], i, j
    cdef double s1, s2, gh
    gx_arr = np.empty((n, d), dtype=np.float64)
    ggamma_arr = np.zeros(d, dtype=np.float64)
    gbeta_arr = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[::1] ggamma = ggamma_arr
    cdef double[::1] gbeta = gbeta_arr
    with nogil:
        for i in range(n):
            s1 = 0.0
            s2 = 0.0
            for j in range(d):
                gh = g[i, j] * gamma[j]
                s1 += gh
                s2 += gh * xhat[i, j]
                ggamma[j] += g[i, j] * xhat[i, j]
                gbeta[j] += g[i, j]
            for j in range(d):
                gh = g[i, j] * gamma[j]
                gx[i, j] = (rstd[i] / d) * (d * gh - s1 - xhat[i, j] * s2)
    return gx_arr, ggamma_arr, gbeta_arr


def softmax_rows(const double[:, ::1] s):
    cdef Py_ssize_t n = s.shape[0], d = s.shape[1], i, j
    cdef double m, tot
    out = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            m = s[i, 0]
            for j in range(1, d):
                if s[i, j] > m:
                    m = s[i, j]
            tot = 0.0
            for j in range(d):
                o[i, j] = exp(s[i, j] - m)
                tot += o[i, j]
            for j in range(d):
                o[i, j] /= tot
    return out


def session_topk_hits(const double[::1] scores, const cnp.int64_t[::1] labels,
                      const cnp.int64_t[::1] offsets, Py_ssize_t k):
    """Selection by repeated max scan; the first row wins ties (stable order)."""
    cdef Py_ssize_t n_sessions = offsets.shape[0] - 1
    cdef Py_ssize_t s, lo, hi, r, t, best, m
    cdef double bv
    cdef cnp.int64_t acc
    hits_arr = np.zeros(n_sessions, dtype=np.int64)
    cdef cnp.int64_t[::1] hits = hits_arr
    taken_arr = np.zeros(scores.shape[0], dtype=np.uint8)
    cdef unsigned char[::1] taken = taken_arr
    with nogil:
        for s in range(n_sessions):
            lo = offsets[s]
            hi = offsets[s + 1]
            m = k if k < hi - lo else hi - lo
            acc = 0
            for t in range(m):
                best = -1
                bv = 0.0
                for r in range(lo, hi):
                    if taken[r]:
                        continue
                    if best < 0 or scores[r] > bv:
                        best = r
                        bv = scores[r]
                taken[best] = 1
                acc += labels[best]
            hits[s] = acc
    return hits_arr


def auc_rank_sum(const double[::1] scores, const cnp.int64_t[::1] labels):
    order_arr = np.argsort(np.asarray(scores), kind="mergesort")
    cdef cnp.int64_t[::1] order = order_arr.astype(np.int64)
    cdef Py_ssize_t n = scores.shape[0], i, j, t
    cdef double mid, rank_pos = 0.0
    cdef cnp.int64_t n_pos = 0, pos_in_group
    with nogil:
        i = 0
        while i < n:
            j = i
            pos_in_group = 0
            while j < n and scores[order[j]] == scores[order[i]]:
                pos_in_group += labels[order[j]]
                j += 1
            mid = (i + j + 1) / 2.0
            rank_pos += mid * pos_in_group
            n_pos += pos_in_group
            i = j
    return (rank_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * (n - n_pos))
