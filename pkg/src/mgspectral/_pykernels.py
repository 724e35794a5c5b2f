"""Pure-Python/numpy implementations of the hot kernels.

Signatures mirror ``_ckernels.pyx`` exactly; ``kernels.py`` picks one at import.
"""
import math

import numpy as np

_TINY = 1e-300


def symbol_fill(k1, k2, k3, n_squared, eps_nu):
    """MG multiplier components on broadcastable wavenumber arrays."""
    k1, k2, k3 = np.broadcast_arrays(np.asarray(k1, float), np.asarray(k2, float), np.asarray(k3, float))
    n4 = n_squared * n_squared
    ksq = k1 * k1 + k2 * k2 + k3 * k3
    s = k2 * k2 + eps_nu * (ksq * ksq)
    d = n4 * ksq * (k3 * k3) + s * s
    active = k3 != 0
    d = np.where(active, d, 1.0)
    m1 = np.where(active, (n4 * k2 * k3 * ksq - n_squared * k1 * k3 * s) / d, 0.0)
    m2 = np.where(active, (-n4 * k1 * k3 * ksq - n_squared * k2 * k3 * s) / d, 0.0)
    m3 = np.where(active, n_squared * (k1 * k1 + k2 * k2) * s / d, 0.0)
    return m1, m2, m3


def ladder_pivots(sigma, diag, offprod):
    """Continued-fraction pivots of (sigma - L) from the tail to the head.

    Returns ``(head, count)``: ``head`` is the characteristic function at sigma and
    ``count`` the number of negative pivots (eigenvalues of the chain above sigma).
    """
    n = len(diag)
    delta = sigma - diag[n - 1]
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


def ladder_bisect(lo, hi, diag, offprod, maxit, rtol):
    """Bisect for the largest eigenvalue of the chain inside [lo, hi].

    Requires at least one eigenvalue above ``lo`` and none above ``hi``.
    Returns ``(sigma, iterations)``.
    """
    diag = [float(x) for x in diag]
    offprod = [float(x) for x in offprod]
    it = 0
    while it < maxit and hi - lo > rtol * max(abs(lo), abs(hi), _TINY):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        _, c = ladder_pivots(mid, diag, offprod)
        if c >= 1:
            lo = mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it


def lower_bound_values(k1, k2, amplitude, m, n_squared, eps_nu, eps_kappa):
    k1 = np.asarray(k1, float)
    k2 = np.asarray(k2, float)
    kh = k1 * k1 + k2 * k2
    q2 = k2 * k2
    mm = float(m * m)
    n4 = n_squared * n_squared
    a = kh + mm
    b = kh + 4.0 * mm
    num = q2 + eps_nu * (a * a)
    den_s = q2 + eps_nu * (b * b)
    den = 4.0 * n4 * mm * b + den_s * den_s
    return 0.5 * amplitude * m * n_squared * kh * num / den - eps_kappa * b


def lower_bound_argmax(amplitude, m, n_squared, eps_nu, eps_kappa, k1lo, k1hi, k2lo, k2hi):
    """Exhaustive maximiser of the closed-form lower bound over an integer box.

    Ties resolve to the smallest k2, then the smallest k1.
    """
    k1 = np.arange(k1lo, k1hi + 1, dtype=float)
    best, b1, b2 = -math.inf, k1lo, k2lo
    for k2 in range(k2lo, k2hi + 1):
        v = lower_bound_values(k1, float(k2), amplitude, m, n_squared, eps_nu, eps_kappa)
        i = int(np.argmax(v))
        if v[i] > best:
            best, b1, b2 = float(v[i]), int(k1lo + i), k2
    return best, b1, b2
