# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled lattice kernels: forward, backward and Viterbi over the sparse
allowed-transition layout.  Mirrors py_backend exactly (same signatures and
tie-breaking); see that module for the argument conventions."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, INFINITY

BACKEND = "compiled"


cdef inline double _logaddexp(double a, double b) nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a >= b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def sparse_forward(double[:, ::1] emission, double[:, ::1] trans,
                   long[::1] prev_idx, long[::1] next_idx,
                   long[::1] by_next, long[::1] starts):
    cdef Py_ssize_t T = emission.shape[0]
    cdef Py_ssize_t E = emission.shape[1]
    cdef Py_ssize_t A = prev_idx.shape[0]
    cdef cnp.ndarray alpha_arr = np.empty((T, E), dtype=np.float64)
    cdef double[:, ::1] alpha = alpha_arr
    cdef Py_ssize_t t, e, a, tr
    cdef bint shared = trans.shape[0] == 1
    cdef double acc, m, s

    for e in range(E):
        alpha[0, e] = emission[0, e]
    for t in range(1, T):
        tr = 0 if shared else t - 1
        for e in range(E):
            alpha[t, e] = -INFINITY
        for a in range(A):
            e = next_idx[a]
            alpha[t, e] = _logaddexp(alpha[t, e],
                                     alpha[t - 1, prev_idx[a]] + trans[tr, a])
        for e in range(E):
            alpha[t, e] += emission[t, e]

    m = alpha[T - 1, 0]
    for e in range(1, E):
        if alpha[T - 1, e] > m:
            m = alpha[T - 1, e]
    s = 0.0
    for e in range(E):
        s += exp(alpha[T - 1, e] - m)
    return alpha_arr, float(m + log(s))


def sparse_backward(double[:, ::1] emission, double[:, ::1] trans,
                    long[::1] prev_idx, long[::1] next_idx,
                    long[::1] by_next, long[::1] starts):
    cdef Py_ssize_t T = emission.shape[0]
    cdef Py_ssize_t E = emission.shape[1]
    cdef Py_ssize_t A = prev_idx.shape[0]
    cdef cnp.ndarray beta_arr = np.empty((T, E), dtype=np.float64)
    cdef double[:, ::1] beta = beta_arr
    cdef Py_ssize_t t, e, a, tr
    cdef bint shared = trans.shape[0] == 1

    for e in range(E):
        beta[T - 1, e] = 0.0
    for t in range(T - 2, -1, -1):
        tr = 0 if shared else t
        for e in range(E):
            beta[t, e] = -INFINITY
        for a in range(A):
            e = next_idx[a]
            beta[t, prev_idx[a]] = _logaddexp(
                beta[t, prev_idx[a]],
                trans[tr, a] + emission[t + 1, e] + beta[t + 1, e])
    return beta_arr


def sparse_viterbi(double[:, ::1] emission, double[:, ::1] trans,
                   long[::1] prev_idx, long[::1] next_idx,
                   long[::1] by_next, long[::1] starts):
    cdef Py_ssize_t T = emission.shape[0]
    cdef Py_ssize_t E = emission.shape[1]
    cdef Py_ssize_t A = prev_idx.shape[0]
    cdef cnp.ndarray ptr_arr = np.empty((T, E), dtype=np.int64)
    cdef long[:, ::1] ptr = ptr_arr
    cdef cnp.ndarray path_arr = np.empty(T, dtype=np.int64)
    cdef long[::1] path = path_arr
    cdef double[::1] delta = np.empty(E, dtype=np.float64)
    cdef double[::1] delta_new = np.empty(E, dtype=np.float64)
    cdef Py_ssize_t t, e, a, k, tr, p
    cdef bint shared = trans.shape[0] == 1
    cdef double c, best
    cdef long best_e

    for e in range(E):
        delta[e] = emission[0, e]
    for t in range(1, T):
        tr = 0 if shared else t - 1
        for e in range(E):
            # entries within a group are sorted by prev edge id, so a strict
            # comparison keeps the smallest prev at ties
            k = by_next[starts[e]]
            best = delta[prev_idx[k]] + trans[tr, k]
            ptr[t, e] = prev_idx[k]
            for a in range(starts[e] + 1, starts[e + 1]):
                k = by_next[a]
                c = delta[prev_idx[k]] + trans[tr, k]
                if c > best:
                    best = c
                    ptr[t, e] = prev_idx[k]
            delta_new[e] = emission[t, e] + best
        for e in range(E):
            delta[e] = delta_new[e]

    best = delta[0]
    best_e = 0
    for e in range(1, E):
        if delta[e] > best:
            best = delta[e]
            best_e = e
    path[T - 1] = best_e
    for t in range(T - 1, 0, -1):
        path[t - 1] = ptr[t, path[t]]
    return path_arr, float(best)
