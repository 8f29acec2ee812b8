# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled excitation kernels (see ``_pykernels`` for the reference)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef int _chol_ok(double[:, ::1] G, int n, double shift):
    """In-place Cholesky of G - shift*I; 1 if positive definite."""
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = G[j, j] - shift
        for k in range(j):
            s -= G[j, k] * G[j, k]
        if s <= 0.0:
            return 0
        G[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = G[i, j]
            for k in range(j):
                s -= G[i, k] * G[j, k]
            G[i, j] = s / G[j, j]
    return 1


cdef void _gram(double[:, ::1] seq, int end, int l, int h, int m, double[:, ::1] G):
    cdef int n = m * h
    cdef int t, a, b, ra, rb
    for a in range(n):
        for b in range(n):
            G[a, b] = 0.0
    for t in range(end - l + 1, end + 1):
        for a in range(n):
            ra = t - a // m
            for b in range(a + 1):
                rb = t - b // m
                G[a, b] += seq[ra, a % m] * seq[rb, b % m]
    for a in range(n):
        for b in range(a + 1, n):
            G[a, b] = G[b, a]


def pe_gram(seq, int end, int l, int h):
    cdef cnp.ndarray[double, ndim=2] s = np.ascontiguousarray(np.asarray(seq, dtype=float).reshape(len(seq), -1))
    cdef int m = s.shape[1]
    if end - l - h + 2 < 0 or end >= s.shape[0]:
        raise IndexError("insufficient history for the requested window")
    G = np.zeros((m * h, m * h))
    _gram(s, end, l, h, m, G)
    return G


def pe_screen(tail, cands, pinned, int l, int h, double rho0, double margin):
    cdef double[:, ::1] tl = np.ascontiguousarray(tail, dtype=float)
    cdef double[:, ::1] cd = np.ascontiguousarray(cands, dtype=float)
    cdef double[:, ::1] pn = np.ascontiguousarray(np.asarray(pinned, dtype=float).reshape(h - 1, tl.shape[1]))
    cdef int m = tl.shape[1]
    cdef int C = cd.shape[0]
    cdef int nb = l + h - 2
    cdef int L = nb + h
    cdef int n = m * h
    cdef int c, k, r, j
    cdef double[:, ::1] seq = np.empty((L, m))
    cdef double[:, ::1] G = np.empty((n, n))
    out = np.ones(C, dtype=bool)
    cdef cnp.npy_bool[::1] ok = out
    for r in range(nb):
        for j in range(m):
            seq[r, j] = tl[r, j]
    for r in range(h - 1):
        for j in range(m):
            seq[nb + 1 + r, j] = pn[r, j]
    for c in range(C):
        for j in range(m):
            seq[nb, j] = cd[c, j]
        for k in range(h):
            _gram(seq, nb + k, l, h, m, G)
            if not _chol_ok(G, n, rho0 + margin):
                ok[c] = False
                break
    return out
