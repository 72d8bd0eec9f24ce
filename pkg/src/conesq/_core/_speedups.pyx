# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: distance-to-cloud mins and power-law kernel sums.

Loops are plain C with the GIL released; summation over atoms is sequential
in index order, which the numpy fallback matches up to pairwise-summation
rounding (backends agree to ~1e-12 relative, see tests/test_backends.py).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, pow, sqrt


def min_dist(pts_in, cloud_in):
    pts = np.ascontiguousarray(pts_in, dtype=np.float64)
    cloud = np.ascontiguousarray(cloud_in, dtype=np.float64)
    cdef double[:, ::1] p = pts
    cdef double[:, ::1] c = cloud
    cdef Py_ssize_t S = p.shape[0], N = c.shape[0], n = p.shape[1]
    out = np.empty(S, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double best, d2, diff
    with nogil:
        for i in range(S):
            best = INFINITY
            for j in range(N):
                d2 = 0.0
                for k in range(n):
                    diff = p[i, k] - c[j, k]
                    d2 += diff * diff
                if d2 < best:
                    best = d2
            o[i] = sqrt(best)
    return out


def pow_kernel_sum(pts_in, atoms_in, w_in, double p):
    pts = np.ascontiguousarray(pts_in, dtype=np.float64)
    atoms = np.ascontiguousarray(atoms_in, dtype=np.float64)
    w = np.ascontiguousarray(w_in, dtype=np.complex128)
    cdef double[:, ::1] x = pts
    cdef double[:, ::1] z = atoms
    cdef double complex[::1] wv = w
    cdef Py_ssize_t S = x.shape[0], N = z.shape[0], n = x.shape[1]
    out = np.empty(S, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double d2, diff, r
    cdef double complex acc
    with nogil:
        for i in range(S):
            acc = 0
            for j in range(N):
                d2 = 0.0
                for k in range(n):
                    diff = x[i, k] - z[j, k]
                    d2 += diff * diff
                r = sqrt(d2)
                acc = acc + wv[j] * pow(r, -p)
            o[i] = acc
    return out


def signed_kernel_sum(pts_in, atoms_in, w_in, double p):
    pts = np.ascontiguousarray(pts_in, dtype=np.float64)
    atoms = np.ascontiguousarray(atoms_in, dtype=np.float64)
    w = np.ascontiguousarray(w_in, dtype=np.complex128)
    cdef double[:, ::1] x = pts
    cdef double[:, ::1] z = atoms
    cdef double complex[::1] wv = w
    cdef Py_ssize_t S = x.shape[0], N = z.shape[0], n = x.shape[1]
    out = np.empty(S, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double d2, diff, r
    cdef double complex acc
    with nogil:
        for i in range(S):
            acc = 0
            for j in range(N):
                d2 = 0.0
                for k in range(n):
                    diff = x[i, k] - z[j, k]
                    d2 += diff * diff
                r = sqrt(d2)
                acc = acc + wv[j] * ((x[i, 0] - z[j, 0]) * pow(r, -(p + 1.0)))
            o[i] = acc
    return out
