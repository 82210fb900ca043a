"""Seeded random instances for tests, the verifier and the bench harness."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .pnorm import RegressionProblem
from .sparse import SparseMatrix

KINDS = ("gaussian", "heavy", "sparse")


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_sparse(n, d, density, seed=0, full_rank=True):
    """n×d matrix with iid Gaussian nonzeros at the given density.

    With ``full_rank`` the first d rows also get a unit diagonal so the
    column rank is d regardless of the sparsity pattern.
    """
    rng = _rng(seed)
    M = sp.random(n, d, density=density, format="csr", random_state=rng,
                  data_rvs=rng.standard_normal)
    if full_rank:
        k = min(n, d)
        M = M + sp.csr_matrix((np.ones(k), (np.arange(k), np.arange(k))), shape=(n, d))
    return SparseMatrix.from_scipy(M)


def random_rows_per_row(n, d, k, seed=0):
    """Exactly k nonzeros per row at distinct random columns (nnz = n·k)."""
    rng = _rng(seed)
    if not 1 <= k <= d:
        raise ValueError("need 1 ≤ k ≤ d")
    cols = np.argsort(rng.random((n, d)), axis=1)[:, :k]
    cols.sort(axis=1)
    indptr = np.arange(0, n * k + 1, k, dtype=np.int64)
    return SparseMatrix(n, d, indptr, cols.ravel(), rng.standard_normal(n * k))


def design_matrix(kind, n, d, seed=0, density=0.2):
    rng = _rng(seed)
    if kind == "gaussian":
        return SparseMatrix.from_dense(rng.standard_normal((n, d)))
    if kind == "heavy":
        D = rng.standard_normal((n, d)) * (rng.pareto(1.5, n) + 1.0)[:, None]
        return SparseMatrix.from_dense(D)
    if kind == "sparse":
        return random_sparse(n, d, density, rng)
    raise ValueError(f"unknown instance kind {kind!r}; expected one of {KINDS}")


def regression_instance(n, d, p, form="p1", kind="gaussian", seed=0, constraints=0,
                        density=0.2):
    """A RegressionProblem with a random right-hand side.

    For P1, ``constraints`` > 0 adds a consistent system Cx = v with that
    many rows. For P2 the right-hand side is Aᵀx₀ for a random x₀, so the
    problem is feasible.
    """
    rng = _rng(seed)
    A = design_matrix(kind, n, d, rng, density)
    if form == "p2":
        return RegressionProblem(A, A.rmatvec(rng.standard_normal(n)), p=p, form="p2")
    b = rng.standard_normal(n)
    if constraints:
        C = rng.standard_normal((constraints, d))
        v = C @ rng.standard_normal(d)
        return RegressionProblem(A, b, C, v, p=p, form="p1")
    return RegressionProblem(A, b, p=p, form="p1")


def log_uniform_thresholds(n, decades=3.0, seed=0):
    """t with log10 t uniform on [0, decades]; already ≥ 1."""
    return 10.0 ** _rng(seed).uniform(0.0, decades, n)
