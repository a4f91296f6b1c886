# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: mixed Matern-5/2 x Hamming covariance and Kendall counts.

Semantics match cashtree._core._ref exactly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

cdef double SQRT5 = sqrt(5.0)


def kernel_cross(object xc1, object xcat1, object xc2, object xcat2,
                 object lengthscales, double cat_lengthscale, double signal_variance):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(xc1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.ascontiguousarray(xc2, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] ca = np.ascontiguousarray(xcat1, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] cb = np.ascontiguousarray(xcat2, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ls = np.ascontiguousarray(lengthscales, dtype=np.float64)

    cdef Py_ssize_t n1 = a.shape[0], n2 = b.shape[0]
    cdef Py_ssize_t dc = a.shape[1], dk = ca.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n1, n2), dtype=np.float64)

    cdef Py_ssize_t i, j, d
    cdef double r2, diff, r, k, h, inv_dk
    inv_dk = 1.0 / dk if dk > 0 else 0.0
    for i in range(n1):
        for j in range(n2):
            r2 = 0.0
            for d in range(dc):
                diff = (a[i, d] - b[j, d]) / ls[d]
                r2 += diff * diff
            r = sqrt(r2)
            k = (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * exp(-SQRT5 * r)
            if dk > 0:
                h = 0.0
                for d in range(dk):
                    if ca[i, d] != cb[j, d]:
                        h += 1.0
                k *= exp(-cat_lengthscale * h * inv_dk)
            out[i, j] = signal_variance * k
    return out


def kernel_gram(object xc, object xcat, object lengthscales,
                double cat_lengthscale, double signal_variance):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(xc, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] ca = np.ascontiguousarray(xcat, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ls = np.ascontiguousarray(lengthscales, dtype=np.float64)

    cdef Py_ssize_t n = a.shape[0], dc = a.shape[1], dk = ca.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, n), dtype=np.float64)

    cdef Py_ssize_t i, j, d
    cdef double r2, diff, r, k, h, inv_dk
    inv_dk = 1.0 / dk if dk > 0 else 0.0
    for i in range(n):
        out[i, i] = signal_variance
        for j in range(i + 1, n):
            r2 = 0.0
            for d in range(dc):
                diff = (a[i, d] - a[j, d]) / ls[d]
                r2 += diff * diff
            r = sqrt(r2)
            k = (1.0 + SQRT5 * r + (5.0 / 3.0) * r2) * exp(-SQRT5 * r)
            if dk > 0:
                h = 0.0
                for d in range(dk):
                    if ca[i, d] != ca[j, d]:
                        h += 1.0
                k *= exp(-cat_lengthscale * h * inv_dk)
            out[i, j] = signal_variance * k
            out[j, i] = out[i, j]
    return out


def kendall_counts(object a, object b):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] x = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef long long conc = 0, disc = 0
    cdef double dx, dy
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0.0 or dy == 0.0:
                continue
            if (dx > 0.0) == (dy > 0.0):
                conc += 1
            else:
                disc += 1
    return int(conc), int(disc)
