# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the numpy kernels in ``_kernels_np``.

Same contracts, sequential fixed-order loops. See the numpy module for the
full docstrings; keep the two implementations in lockstep.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, frexp

from scipy.special.cython_special cimport ndtr

BACKEND_NAME = "cython"


cdef inline double _lookup(double c, long oct_lo, long per_oct,
                           double[::1] table, double tmax) noexcept nogil:
    cdef int e
    cdef double mant, pos, frac
    cdef Py_ssize_t idx
    mant = frexp(c, &e)
    pos = (e - oct_lo) * per_oct + (mant - 0.5) * (2 * per_oct)
    if pos < 0.0:
        pos = 0.0
    elif pos > tmax:
        pos = tmax
    idx = <Py_ssize_t> pos
    frac = pos - idx
    return table[idx] * (1.0 - frac) + table[idx + 1] * frac


def mix_table_accumulate(double[::1] Sa, double[::1] Sb, double[::1] ca,
                         double[::1] cb, double[::1] c0, double[::1] wg,
                         long oct_lo, long per_oct, double[::1] table):
    cdef Py_ssize_t n = Sa.shape[0]
    cdef Py_ssize_t m = wg.shape[0]
    cdef Py_ssize_t i, g
    cdef double acc, c
    cdef double tmax = table.shape[0] - 1.0 - 1e-9
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            acc = 0.0
            for g in range(m):
                c = Sa[i] * ca[g] + Sb[i] * cb[g] + c0[g]
                acc += wg[g] * _lookup(c, oct_lo, per_oct, table, tmax)
            out[i] = acc
    return out_arr


def box_clip_correction(double[::1] Gw, double[::1] Q, double[:, ::1] bhat,
                        double B, double[::1] s0, double[::1] w0):
    cdef Py_ssize_t nu = Gw.shape[0]
    cdef Py_ssize_t ns = s0.shape[0]
    cdef Py_ssize_t p = bhat.shape[0]
    cdef Py_ssize_t s, i, j
    cdef double total = 0.0, inner, J, sig, inv2, qmax, band, bh, dist
    cdef bint clipped
    with nogil:
        for s in range(ns):
            sig = s0[s]
            inv2 = -0.5 / (sig * sig)
            qmax = 1490.0 * sig * sig
            band = 8.0 * sig
            inner = 0.0
            for i in range(nu):
                if Q[i] > qmax:
                    continue
                J = 1.0
                clipped = False
                for j in range(p):
                    bh = bhat[j, i]
                    dist = B - (bh if bh >= 0.0 else -bh)
                    if dist > band:
                        continue
                    clipped = True
                    if dist < -band:
                        J = 0.0
                        break
                    J *= (ndtr((B - bh) / sig)
                          - ndtr((-B - bh) / sig))
                if clipped:
                    inner += Gw[i] * exp(Q[i] * inv2) * (1.0 - J)
            total += w0[s] * inner
    return total


def factor_product_reduce(F_list, double[::1] w_sl):
    cdef Py_ssize_t q = len(F_list)
    cdef Py_ssize_t ns = w_sl.shape[0]
    cdef double[:, ::1] F0, F1, F2
    cdef Py_ssize_t i, j, k, s
    cdef double w, t0, t1
    if q < 1 or q > 3:
        raise ValueError("factor_product_reduce supports 1..3 dimensions")
    F0 = np.ascontiguousarray(F_list[0], dtype=np.float64)
    if q == 1:
        out1 = np.zeros(F0.shape[0], dtype=np.float64)
        _reduce1(F0, w_sl, out1)
        return out1
    F1 = np.ascontiguousarray(F_list[1], dtype=np.float64)
    if q == 2:
        out2 = np.zeros(F0.shape[0] * F1.shape[0], dtype=np.float64)
        _reduce2(F0, F1, w_sl, out2)
        return out2
    F2 = np.ascontiguousarray(F_list[2], dtype=np.float64)
    out3 = np.zeros(F0.shape[0] * F1.shape[0] * F2.shape[0], dtype=np.float64)
    _reduce3(F0, F1, F2, w_sl, out3)
    return out3


cdef void _reduce1(double[:, ::1] F0, double[::1] w, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, s
    cdef double acc
    for i in range(F0.shape[0]):
        acc = 0.0
        for s in range(w.shape[0]):
            acc += w[s] * F0[i, s]
        out[i] = acc


cdef void _reduce2(double[:, ::1] F0, double[:, ::1] F1, double[::1] w,
                   double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, s, n1 = F1.shape[0]
    cdef double t
    for s in range(w.shape[0]):
        for i in range(F0.shape[0]):
            t = w[s] * F0[i, s]
            for j in range(n1):
                out[i * n1 + j] += t * F1[j, s]


cdef void _reduce3(double[:, ::1] F0, double[:, ::1] F1, double[:, ::1] F2,
                   double[::1] w, double[::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, k, s, n1 = F1.shape[0], n2 = F2.shape[0]
    cdef double t0, t1
    for s in range(w.shape[0]):
        for i in range(F0.shape[0]):
            t0 = w[s] * F0[i, s]
            for j in range(n1):
                t1 = t0 * F1[j, s]
                for k in range(n2):
                    out[(i * n1 + j) * n2 + k] += t1 * F2[k, s]
