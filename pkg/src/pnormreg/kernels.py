"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy fallback
is used. Setting ``PNORM_PURE_PYTHON=1`` forces the fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("PNORM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"


def backends():
    """Mapping of available backend names to kernel modules."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["compiled"] = _compiled
    return out


def _f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def csr_matvec(indptr, indices, data, x):
    return _impl.csr_matvec(indptr, indices, data, _f64(x))


def csr_rmatvec(indptr, indices, data, x, n_cols):
    return _impl.csr_rmatvec(indptr, indices, data, _f64(x), int(n_cols))


def csr_row_sqnorms(indptr, indices, data, basis):
    return _impl.csr_row_sqnorms(indptr, indices, data, _f64(basis))


def gamma_values(p, t, x):
    t, x = np.broadcast_arrays(_f64(t), _f64(x))
    return _impl.gamma_values(float(p), _f64(t), _f64(x))


def gamma_sum(p, t, x, w=None):
    t, x = np.broadcast_arrays(_f64(t), _f64(x))
    w = np.ones(x.shape[0]) if w is None else _f64(w)
    return float(_impl.gamma_sum(float(p), _f64(t), _f64(x), w))


def gamma_grad(p, t, x):
    t, x = np.broadcast_arrays(_f64(t), _f64(x))
    return _impl.gamma_grad(float(p), _f64(t), _f64(x))
