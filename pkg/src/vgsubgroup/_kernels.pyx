# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled split-search kernels (see ``_fallback`` for the contracts)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, NAN, sqrt

cnp.import_array()


def sse_scan(const double[::1] xs, const double[::1] ys, double miss_sum,
             double miss_sumsq, double miss_n, double min_child):
    cdef Py_ssize_t m = xs.shape[0], k
    if m < 2:
        return np.empty(0)
    out_arr = np.empty(m - 1)
    cdef double[::1] out = out_arr
    cdef double tot_s = miss_sum, tot_q = miss_sumsq
    for k in range(m):
        tot_s += ys[k]
        tot_q += ys[k] * ys[k]
    cdef double cs = 0.0, cq = 0.0, nl, nr, sr
    for k in range(m - 1):
        cs += ys[k]
        cq += ys[k] * ys[k]
        nl = k + 1
        nr = (m - nl) + miss_n
        if xs[k + 1] > xs[k] and nl >= min_child and nr >= min_child:
            sr = tot_s - cs
            out[k] = (cq - cs * cs / nl) + ((tot_q - cq) - sr * sr / nr)
        else:
            out[k] = INFINITY
    return out_arr


def gi_scan(const double[::1] xs, const double[::1] ys, ts, miss_sum,
            miss_sumsq, miss_n, double min_child):
    cdef Py_ssize_t m = xs.shape[0], k
    if m < 2:
        return np.empty(0)
    cdef const signed char[::1] arm = np.ascontiguousarray(np.asarray(ts) != 0, dtype=np.int8)
    cdef double tn[2]
    cdef double tsum[2]
    cdef double tq[2]
    cdef double cn[2]
    cdef double cs[2]
    cdef double cq[2]
    cdef int a
    for a in range(2):
        tn[a] = miss_n[a]
        tsum[a] = miss_sum[a]
        tq[a] = miss_sumsq[a]
        cn[a] = 0.0
        cs[a] = 0.0
        cq[a] = 0.0
    for k in range(m):
        a = arm[k]
        tn[a] += 1.0
        tsum[a] += ys[k]
        tq[a] += ys[k] * ys[k]
    out_arr = np.empty(m - 1)
    cdef double[::1] out = out_arr
    cdef double total, rn, rs, nl, nr
    cdef bint ok
    for k in range(m - 1):
        a = arm[k]
        cn[a] += 1.0
        cs[a] += ys[k]
        cq[a] += ys[k] * ys[k]
        nl = k + 1
        nr = (tn[0] + tn[1]) - nl
        ok = xs[k + 1] > xs[k] and nl >= min_child and nr >= min_child
        total = 0.0
        for a in range(2):
            rn = tn[a] - cn[a]
            if cn[a] <= 0 or rn <= 0:
                ok = False
                break
            rs = tsum[a] - cs[a]
            total += (cq[a] - cs[a] * cs[a] / cn[a]) + ((tq[a] - cq[a]) - rs * rs / rn)
        out[k] = total if ok else INFINITY
    return out_arr


def slope_stats(const double[:, :] X, const double[::1] y, miss):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef const cnp.npy_bool[:, :] mm = np.asarray(miss, dtype=bool)
    t_arr = np.empty(p)
    df_arr = np.empty(p)
    cdef double[::1] t = t_arr
    cdef double[::1] dfv = df_arr
    cdef double nj, sx, sy, mx, my, dx, dy, sxx, sxy, syy, df, rss, se
    for j in range(p):
        nj = 0.0
        sx = 0.0
        sy = 0.0
        for i in range(n):
            if not mm[i, j]:
                nj += 1.0
                sx += X[i, j]
                sy += y[i]
        df = nj - 2.0
        dfv[j] = df
        if nj == 0:
            t[j] = NAN
            continue
        mx = sx / nj
        my = sy / nj
        sxx = 0.0
        sxy = 0.0
        syy = 0.0
        for i in range(n):
            if not mm[i, j]:
                dx = X[i, j] - mx
                dy = y[i] - my
                sxx += dx * dx
                sxy += dx * dy
                syy += dy * dy
        if sxx <= 0 or df < 1:
            t[j] = NAN
            continue
        rss = syy - sxy * sxy / sxx
        if rss < 0:
            rss = 0.0
        se = sqrt(rss / df / sxx)
        if se == 0:
            t[j] = 0.0 if sxy == 0 else INFINITY
        else:
            t[j] = (sxy / sxx) / se
    return t_arr, df_arr
