# cython: language_level=3
"""Compiled hot kernels. Same signatures and semantics as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, INFINITY

cdef double _TINY = 1e-300

cnp.import_array()


def symbol_fill(k1, k2, k3, double n_squared, double eps_nu):
    cdef cnp.ndarray[double, ndim=1] a1, a2, a3
    b1, b2, b3 = np.broadcast_arrays(np.asarray(k1, float), np.asarray(k2, float), np.asarray(k3, float))
    shape = b1.shape
    a1 = np.ascontiguousarray(b1, dtype=float).ravel()
    a2 = np.ascontiguousarray(b2, dtype=float).ravel()
    a3 = np.ascontiguousarray(b3, dtype=float).ravel()
    cdef Py_ssize_t n = a1.shape[0], i
    cdef cnp.ndarray[double, ndim=1] o1 = np.zeros(n), o2 = np.zeros(n), o3 = np.zeros(n)
    cdef double x, y, z, ksq, s, d, n4 = n_squared * n_squared
    with nogil:
        for i in range(n):
            z = a3[i]
            if z == 0.0:
                continue
            x = a1[i]
            y = a2[i]
            ksq = x * x + y * y + z * z
            s = y * y + eps_nu * (ksq * ksq)
            d = n4 * ksq * (z * z) + s * s
            o1[i] = (n4 * y * z * ksq - n_squared * x * z * s) / d
            o2[i] = (-n4 * x * z * ksq - n_squared * y * z * s) / d
            o3[i] = n_squared * (x * x + y * y) * s / d
    return o1.reshape(shape), o2.reshape(shape), o3.reshape(shape)


cdef (double, int) _pivots(double sigma, double[::1] diag, double[::1] offprod) noexcept nogil:
    cdef Py_ssize_t n = diag.shape[0], i
    cdef double delta = sigma - diag[n - 1]
    cdef int count
    if delta == 0.0:
        delta = _TINY
    count = 1 if delta < 0 else 0
    for i in range(n - 2, -1, -1):
        delta = sigma - diag[i] - offprod[i] / delta
        if delta == 0.0:
            delta = _TINY
        if delta < 0:
            count += 1
    return delta, count


def ladder_pivots(double sigma, diag, offprod):
    cdef double[::1] d = np.ascontiguousarray(diag, dtype=float)
    cdef double[::1] p = np.ascontiguousarray(offprod, dtype=float)
    cdef double head
    cdef int count
    head, count = _pivots(sigma, d, p)
    return head, count


def ladder_bisect(double lo, double hi, diag, offprod, int maxit, double rtol):
    cdef double[::1] d = np.ascontiguousarray(diag, dtype=float)
    cdef double[::1] p = np.ascontiguousarray(offprod, dtype=float)
    cdef int it = 0, c
    cdef double mid, head, scale
    with nogil:
        while it < maxit:
            scale = fabs(lo) if fabs(lo) > fabs(hi) else fabs(hi)
            if scale < _TINY:
                scale = _TINY
            if hi - lo <= rtol * scale:
                break
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            head, c = _pivots(mid, d, p)
            if c >= 1:
                lo = mid
            else:
                hi = mid
            it += 1
    return 0.5 * (lo + hi), it


def lower_bound_argmax(double amplitude, int m, double n_squared, double eps_nu, double eps_kappa,
                       long k1lo, long k1hi, long k2lo, long k2hi):
    cdef long i, j, b1 = k1lo, b2 = k2lo
    cdef double best = -INFINITY, v, kh, q2, a, b, num, den_s, den
    cdef double mm = <double>(m * m), n4 = n_squared * n_squared
    cdef double pref = 0.5 * amplitude * m * n_squared
    with nogil:
        for j in range(k2lo, k2hi + 1):
            q2 = <double>j * <double>j
            for i in range(k1lo, k1hi + 1):
                kh = <double>i * <double>i + q2
                a = kh + mm
                b = kh + 4.0 * mm
                num = q2 + eps_nu * (a * a)
                den_s = q2 + eps_nu * (b * b)
                den = 4.0 * n4 * mm * b + den_s * den_s
                v = pref * kh * num / den - eps_kappa * b
                if v > best:
                    best = v
                    b1 = i
                    b2 = j
    return best, b1, b2
