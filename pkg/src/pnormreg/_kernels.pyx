# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Signatures mirror ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()


def csr_matvec(const long long[::1] indptr, const long long[::1] indices,
               const double[::1] data, const double[::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    for i in range(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        y[i] = acc
    return out


def csr_rmatvec(const long long[::1] indptr, const long long[::1] indices,
                const double[::1] data, const double[::1] x, Py_ssize_t n_cols):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, k
    cdef double xi
    out = np.zeros(n_cols, dtype=np.float64)
    cdef double[::1] y = out
    for i in range(n):
        xi = x[i]
        if xi == 0.0:
            continue
        for k in range(indptr[i], indptr[i + 1]):
            y[indices[k]] += data[k] * xi
    return out


def csr_row_sqnorms(const long long[::1] indptr, const long long[::1] indices,
                    const double[::1] data, const double[:, ::1] basis):
    """Squared norms of ``A @ basis`` row by row, without forming the product."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t r = basis.shape[1]
    cdef Py_ssize_t i, k, j
    cdef double v, acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    work_arr = np.empty(r, dtype=np.float64)
    cdef double[::1] work = work_arr
    for i in range(n):
        for j in range(r):
            work[j] = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            v = data[k]
            for j in range(r):
                work[j] += v * basis[indices[k], j]
        acc = 0.0
        for j in range(r):
            acc += work[j] * work[j]
        res[i] = acc
    return out


def gamma_values(double p, const double[::1] t, const double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double ax, ti
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] g = out
    for i in range(n):
        ax = fabs(x[i])
        ti = t[i]
        if ax <= ti:
            if ax == 0.0:
                g[i] = 0.0
            else:
                g[i] = 0.5 * p * pow(ti, p - 2.0) * ax * ax
        else:
            g[i] = pow(ax, p) + (0.5 * p - 1.0) * pow(ti, p)
    return out


def gamma_sum(double p, const double[::1] t, const double[::1] x,
              const double[::1] w):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double ax, ti, acc = 0.0, gi
    for i in range(n):
        if w[i] == 0.0:
            continue
        ax = fabs(x[i])
        ti = t[i]
        if ax <= ti:
            if ax == 0.0:
                continue
            gi = 0.5 * p * pow(ti, p - 2.0) * ax * ax
        else:
            gi = pow(ax, p) + (0.5 * p - 1.0) * pow(ti, p)
        acc += w[i] * gi
    return acc


def gamma_grad(double p, const double[::1] t, const double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i
    cdef double ax, ti, xi
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] g = out
    for i in range(n):
        xi = x[i]
        ax = fabs(xi)
        ti = t[i]
        if ax <= ti:
            if ax == 0.0:
                g[i] = 0.0
            else:
                g[i] = p * pow(ti, p - 2.0) * xi
        elif xi > 0.0:
            g[i] = p * pow(ax, p - 1.0)
        else:
            g[i] = -p * pow(ax, p - 1.0)
    return out
