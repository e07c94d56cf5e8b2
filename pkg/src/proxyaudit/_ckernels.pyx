# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled aggregation kernels.

Sums use Neumaier's compensated accumulation in record-index order; the
running compensation is folded in once at the end of each group.
"""
import numpy as np

from libc.math cimport fabs


def group_sums(const double[::1] values, const Py_ssize_t[::1] groups, Py_ssize_t n_groups):
    """Compensated sum of ``values`` per group id; negative ids are skipped."""
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t i, g
    cdef double x, s, t
    if groups.shape[0] != n:
        raise ValueError("values and groups differ in length")
    total = np.zeros(n_groups, dtype=np.float64)
    carry = np.zeros(n_groups, dtype=np.float64)
    cdef double[::1] tot = total
    cdef double[::1] car = carry
    for i in range(n):
        g = groups[i]
        if g < 0:
            continue
        if g >= n_groups:
            raise IndexError("group id out of range")
        x = values[i]
        s = tot[g]
        t = s + x
        if fabs(s) >= fabs(x):
            car[g] += (s - t) + x
        else:
            car[g] += (x - t) + s
        tot[g] = t
    return total + carry


def weighted_column_sums(const double[::1] values, const double[:, ::1] weights):
    """Per-column compensated sums of ``weights[:, k] * values`` and of ``weights[:, k]``."""
    cdef Py_ssize_t n = weights.shape[0]
    cdef Py_ssize_t k = weights.shape[1]
    cdef Py_ssize_t i, j
    cdef double x, s, t
    if values.shape[0] != n:
        raise ValueError("values and weights differ in length")
    num = np.zeros(k, dtype=np.float64)
    num_c = np.zeros(k, dtype=np.float64)
    den = np.zeros(k, dtype=np.float64)
    den_c = np.zeros(k, dtype=np.float64)
    cdef double[::1] a = num
    cdef double[::1] ac = num_c
    cdef double[::1] b = den
    cdef double[::1] bc = den_c
    for i in range(n):
        for j in range(k):
            x = weights[i, j] * values[i]
            s = a[j]
            t = s + x
            if fabs(s) >= fabs(x):
                ac[j] += (s - t) + x
            else:
                ac[j] += (x - t) + s
            a[j] = t
            x = weights[i, j]
            s = b[j]
            t = s + x
            if fabs(s) >= fabs(x):
                bc[j] += (s - t) + x
            else:
                bc[j] += (x - t) + s
            b[j] = t
    return num + num_c, den + den_c


def threshold_assign(const double[:, ::1] probs, double q):
    """Index of the class whose probability strictly exceeds ``q``, else -1."""
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t k = probs.shape[1]
    cdef Py_ssize_t i, j
    out = np.full(n, -1, dtype=np.intp)
    cdef Py_ssize_t[::1] o = out
    for i in range(n):
        for j in range(k):
            if probs[i, j] > q:
                o[i] = j
                break
    return out
