"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def _row_ids(indptr):
    return np.repeat(np.arange(indptr.shape[0] - 1), np.diff(indptr))


def csr_matvec(indptr, indices, data, x):
    n = indptr.shape[0] - 1
    prod = data * x[indices]
    return np.bincount(_row_ids(indptr), weights=prod, minlength=n).astype(np.float64)


def csr_rmatvec(indptr, indices, data, x, n_cols):
    prod = data * np.repeat(x, np.diff(indptr))
    return np.bincount(indices, weights=prod, minlength=n_cols).astype(np.float64)


def csr_row_sqnorms(indptr, indices, data, basis):
    n = indptr.shape[0] - 1
    rows = np.zeros((n, basis.shape[1]))
    np.add.at(rows, _row_ids(indptr), data[:, None] * basis[indices])
    return np.einsum("ij,ij->i", rows, rows)


def gamma_values(p, t, x):
    ax = np.abs(x)
    inside = ax <= t
    out = np.empty_like(ax)
    ti = t[inside]
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = 0.5 * p * ti ** (p - 2.0) * ax[inside] ** 2
    out[inside] = np.where(ax[inside] == 0.0, 0.0, quad)
    to = t[~inside]
    out[~inside] = ax[~inside] ** p + (0.5 * p - 1.0) * to**p
    return out


def gamma_sum(p, t, x, w):
    keep = w != 0.0
    return float(np.dot(w[keep], gamma_values(p, t[keep], x[keep])))


def gamma_grad(p, t, x):
    ax = np.abs(x)
    inside = ax <= t
    out = np.empty_like(ax)
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = p * t[inside] ** (p - 2.0) * x[inside]
    out[inside] = np.where(ax[inside] == 0.0, 0.0, quad)
    out[~inside] = p * np.sign(x[~inside]) * ax[~inside] ** (p - 1.0)
    return out
