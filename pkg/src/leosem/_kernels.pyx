# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: Bessel J0 and segmented masked softmax/sampling.

Semantics are identical to ``_kernels_py``; the test-suite checks both.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt, sin, cos, exp, log, INFINITY, M_PI

cnp.import_array()

cdef double _SERIES_MAX = 4.0
cdef double _ASYMPTOTIC_MIN = 25.0
cdef double _RESCALE = 1e250


cdef double _j0_series(double x) nogil:
    cdef double q = 0.25 * x * x
    cdef double term = 1.0
    cdef double total = 1.0
    cdef long k = 1
    while True:
        term *= -q / (k * k)
        total += term
        if fabs(term) < 1e-17 * fabs(total) and k > 2:
            break
        k += 1
    return total


cdef double _j0_miller(double x) nogil:
    cdef long start = 2 * <long>((x + 30.0 + 4.0 * sqrt(x)) / 2.0)
    cdef double two_over_x = 2.0 / x
    cdef double j_next = 0.0
    cdef double j_cur = 1e-300
    cdef double j_prev
    cdef double even_sum = 0.0
    cdef long k = start
    while k > 0:
        j_prev = k * two_over_x * j_cur - j_next
        j_next = j_cur
        j_cur = j_prev
        if fabs(j_cur) > _RESCALE:
            j_cur /= _RESCALE
            j_next /= _RESCALE
            even_sum /= _RESCALE
        if (k - 1) % 2 == 0 and k - 1 > 0:
            even_sum += j_cur
        k -= 1
    return j_cur / (j_cur + 2.0 * even_sum)


cdef double _j0_asymptotic(double x) nogil:
    cdef double inv8x = 1.0 / (8.0 * x)
    cdef double p = 1.0
    cdef double q = 0.0
    cdef double t = 1.0
    cdef double t_next, sign
    cdef long k = 1
    cdef long odd
    while k < 80:
        odd = 2 * k - 1
        t_next = t * (odd * odd) * inv8x / k
        if t_next >= t:
            break
        t = t_next
        sign = 1.0 if (k // 2) % 2 == 0 else -1.0
        if k % 2 == 1:
            q -= sign * t
        else:
            p += sign * t
        if t < 1e-18:
            break
        k += 1
    cdef double s = sin(x)
    cdef double c = cos(x)
    return sqrt(1.0 / (M_PI * x)) * (p * (c + s) - q * (s - c))


cdef double _j0(double x) nogil:
    x = fabs(x)
    if x < _SERIES_MAX:
        return _j0_series(x)
    if x < _ASYMPTOTIC_MIN:
        return _j0_miller(x)
    return _j0_asymptotic(x)


def j0(double x):
    return _j0(x)


def j0_array(xs):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] flat = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(flat.shape[0], dtype=np.float64)
    cdef Py_ssize_t i
    for i in range(flat.shape[0]):
        out[i] = _j0(flat[i])
    return out.reshape(np.shape(xs))


def masked_log_softmax(logits, mask, offsets):
    cdef double[:, ::1] lg = np.ascontiguousarray(logits, dtype=np.float64)
    cdef unsigned char[:, ::1] mk = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t[::1] off = np.ascontiguousarray(offsets, dtype=np.intp)
    cdef Py_ssize_t rows = lg.shape[0]
    cdef Py_ssize_t cols = lg.shape[1]
    out_arr = np.full((rows, cols), -np.inf)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n_heads = off.shape[0] - 1
    cdef Py_ssize_t r, h, j, lo, hi
    cdef double best, acc, log_z
    for r in range(rows):
        for h in range(n_heads):
            lo = off[h]
            hi = off[h + 1]
            best = -INFINITY
            for j in range(lo, hi):
                if mk[r, j] and lg[r, j] > best:
                    best = lg[r, j]
            if best == -INFINITY:
                raise ValueError(f"head {h} of row {r} has no legal entry")
            acc = 0.0
            for j in range(lo, hi):
                if mk[r, j]:
                    acc += exp(lg[r, j] - best)
            log_z = best + log(acc)
            for j in range(lo, hi):
                if mk[r, j]:
                    out[r, j] = lg[r, j] - log_z
    return out_arr


def sample_segment(logp, Py_ssize_t lo, Py_ssize_t hi, double u):
    cdef double[::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    cdef double acc = 0.0
    cdef Py_ssize_t last = -1
    cdef Py_ssize_t j
    for j in range(lo, hi):
        if lp[j] == -INFINITY:
            continue
        last = j
        acc += exp(lp[j])
        if u < acc:
            return j
    if last < 0:
        raise ValueError("segment has no legal entry")
    return last
