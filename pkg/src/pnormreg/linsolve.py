"""Inverse operators for AᵀWA, preconditioned Richardson and SMW maintenance.

``InverseOperator`` is the contract the outer algorithms consume: something
that applies an approximation of (AᵀWA)⁻¹ with a stated relative error
bound. Small systems are factored densely (Cholesky plus refinement), large
ones are solved by Jacobi-preconditioned conjugate gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .errors import ContractViolation, DivergenceError, RankDeficientError, UpdateRejected
from .sparse import condition_number_estimate

EPS = np.finfo(float).eps
DENSE_MAX_D = 1500
DEFAULT_TOL_DENSE = 1e-10
DEFAULT_TOL_ITERATIVE = 1e-8
SMW_COND_LIMIT = 1e12


def _check_weights(A, weights):
    if weights is None:
        return np.ones(A.n_rows)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (A.n_rows,):
        raise ContractViolation("weights must have one entry per row of A")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ContractViolation("weights must be finite and strictly positive")
    return w


class InverseOperator:
    """Applies an approximation of (AᵀWA)⁻¹.

    Guarantee: ``‖apply(b) − (AᵀWA)⁻¹b‖ ≤ error_bound·‖(AᵀWA)⁻¹b‖``.
    """

    def __init__(self, A, weights, tol, method, error_bound, solve, cost):
        self.A = A
        self.weights = weights
        self.tol = tol
        self.method = method
        self.error_bound = error_bound
        self._solve = solve
        self.build_cost = cost

    @property
    def d(self):
        return self.A.n_cols

    def apply(self, b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.d:
            raise ValueError(f"expected leading dimension {self.d}, got {b.shape}")
        self.build_cost["applies"] += 1 if b.ndim == 1 else b.shape[1]
        return self._solve(b)

    __call__ = apply

    def dense(self):
        return self.apply(np.eye(self.d))

    def normal_matvec(self, x):
        """Exact product with the target matrix AᵀWA."""
        return self.A.rmatvec(self.weights * self.A.matvec(x))


def build_inverse_operator(A, weights=None, tol=None, method="auto"):
    w = _check_weights(A, weights)
    d = A.n_cols
    if method == "auto":
        method = "dense" if d <= DENSE_MAX_D else "iterative"
    if method == "dense":
        return _build_dense(A, w, DEFAULT_TOL_DENSE if tol is None else tol)
    if method == "iterative":
        return _build_iterative(A, w, DEFAULT_TOL_ITERATIVE if tol is None else tol)
    raise ValueError(f"unknown method {method!r}")


def _build_dense(A, w, tol):
    d = A.n_cols
    G = A.gram(w)
    anorm = float(np.abs(G).sum(axis=0).max())
    try:
        factor = sla.cho_factor(G, lower=False, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise RankDeficientError("rank-deficient: AᵀWA is not positive definite") from exc
    rcond, info = lapack.dpocon(factor[0], anorm, uplo="U")
    if info != 0 or rcond < 10 * EPS * max(d, 1):
        raise RankDeficientError(f"rank-deficient: reciprocal condition {rcond:.3g}")
    cond = 1.0 / rcond
    # one Cholesky solve has relative error ~ c·d·eps·cond; every refinement
    # step multiplies the error by the same factor
    one_step = 4.0 * d * EPS * cond
    bound, refine = one_step, 0
    while bound > tol and refine < 3 and one_step < 0.5:
        refine += 1
        bound *= one_step
    bound = max(bound, 2 * EPS)
    if bound > tol:
        raise RankDeficientError(
            f"rank-deficient: cannot meet tolerance {tol:g} at condition {cond:.3g}"
        )

    def solve(b):
        x = sla.cho_solve(factor, b)
        for _ in range(refine):
            x = x + sla.cho_solve(factor, b - G @ x)
        return x

    cost = {"method": "dense", "factorizations": 1, "refinement_steps": refine,
            "condition": cond, "applies": 0}
    return InverseOperator(A, w, tol, "dense", bound, solve, cost)


def _build_iterative(A, w, tol):
    d = A.n_cols
    kappa = condition_number_estimate(A.scale_rows(np.sqrt(w)), iters=50).kappa
    rtol = max(tol / kappa, 1e-15)
    S = A.to_scipy()
    diag = np.asarray((S.multiply(S).T @ w)).ravel()
    if np.any(diag <= 0):
        raise RankDeficientError("rank-deficient: empty column")
    op = spla.LinearOperator((d, d), matvec=lambda x: A.rmatvec(w * A.matvec(x)),
                             dtype=np.float64)
    jac = spla.LinearOperator((d, d), matvec=lambda x: x / diag, dtype=np.float64)
    cost = {"method": "iterative", "factorizations": 0, "condition": kappa,
            "applies": 0, "cg_iterations": 0}

    def solve_one(b):
        its = [0]

        def cb(_):
            its[0] += 1

        x, info = spla.cg(op, b, rtol=rtol, atol=0.0, maxiter=20 * d + 100, M=jac,
                          callback=cb)
        cost["cg_iterations"] += its[0]
        if info != 0:
            raise DivergenceError("conjugate gradients did not reach tolerance")
        return x

    def solve(b):
        if b.ndim == 1:
            return solve_one(b)
        return np.column_stack([solve_one(b[:, k]) for k in range(b.shape[1])])

    return InverseOperator(A, w, tol, "iterative", tol, solve, cost)


# Richardson --------------------------------------------------------------


@dataclass
class RichardsonResult:
    x: np.ndarray
    iterations: int
    residual_history: list
    converged: bool


def _as_apply(precond):
    if callable(getattr(precond, "apply", None)):
        return precond.apply
    if callable(precond):
        return precond
    M = np.asarray(precond, dtype=np.float64)
    return lambda v: M @ v


def richardson_solve(A, b, precond, lam=1.0, tol=1e-10, max_iter=None, x0=None,
                     weights=None, rhs=None, callback=None, raise_on_fail=True):
    """Preconditioned Richardson for the normal equations AᵀWAx = Aᵀ W b.

    ``precond`` applies Z ≈ (AᵀWA)⁻¹ with (1/λ)AᵀWA ⪯ Z⁻¹ ⪯ AᵀWA, so the
    effective preconditioner M = λZ⁻¹ sits in [AᵀWA, λAᵀWA] and the update
    x ← x − M⁻¹(AᵀWAx − AᵀWb) contracts the energy-norm error by 1 − 1/λ.
    Passing ``rhs`` replaces AᵀWb by an arbitrary right-hand side.
    """
    if lam < 1:
        raise ContractViolation("lambda must be at least 1")
    w = np.ones(A.n_rows) if weights is None else np.asarray(weights, dtype=np.float64)
    if rhs is None:
        rhs = A.rmatvec(w * np.asarray(b, dtype=np.float64))
    rhs = np.asarray(rhs, dtype=np.float64)
    apply = _as_apply(precond)
    x = np.zeros(A.n_cols) if x0 is None else np.array(x0, dtype=np.float64)
    if max_iter is None:
        max_iter = int(math.ceil(lam * (math.log(1.0 / max(tol, 1e-300)) + 30))) + 10
    scale = max(np.linalg.norm(rhs), 1e-300)

    history = []
    resid = A.rmatvec(w * A.matvec(x)) - rhs
    history.append(float(np.linalg.norm(resid) / scale))
    converged = history[-1] <= tol or not np.any(rhs)
    k = 0
    while not converged and k < max_iter:
        x = x - apply(resid) / lam
        k += 1
        if callback is not None:
            callback(x)
        resid = A.rmatvec(w * A.matvec(x)) - rhs
        history.append(float(np.linalg.norm(resid) / scale))
        if not np.isfinite(history[-1]):
            break
        converged = history[-1] <= tol
    if not converged and raise_on_fail:
        raise DivergenceError(
            f"Richardson did not converge in {k} iterations (residual {history[-1]:.3g})",
            history,
        )
    return RichardsonResult(x, k, history, converged)


# Inverse maintenance -------------------------------------------------------


@dataclass
class MaintainedInverse:
    """Y + Q approximating (AᵀWA)⁻¹ for slowly changing weights W.

    Y is the base operator frozen at the last rebuild; Q accumulates
    Sherman–Morrison–Woodbury corrections. ``reference_weights`` are the
    weights the current Y + Q represents.
    """

    A: object
    base: InverseOperator
    Q: np.ndarray
    reference_weights: np.ndarray
    tol: float | None = None
    update_log: list = field(default_factory=list)
    calls: int = 0
    rebuilds: int = 0
    rebuilt_last: bool = False

    @classmethod
    def build(cls, A, weights, tol=None):
        base = build_inverse_operator(A, weights, tol)
        return cls(A, base, np.zeros((A.n_cols, A.n_cols)), np.array(base.weights), tol)

    @property
    def d(self):
        return self.A.n_cols

    def apply(self, b):
        return self.base.apply(b) + self.Q @ np.asarray(b, dtype=np.float64)

    __call__ = apply

    def dense(self):
        return self.base.dense() + self.Q

    def reweight(self, rows, new_weights):
        """Move the weights of ``rows`` to ``new_weights`` by one SMW update."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            return self
        new_weights = np.asarray(new_weights, dtype=np.float64)
        if np.any(new_weights <= 0):
            raise ContractViolation("weights must be strictly positive")
        delta = new_weights - self.reference_weights[rows]
        U = self.A.take_rows(rows).to_dense().T
        smw_update(self, U, delta)
        self.reference_weights[rows] = new_weights
        return self

    def rebuild(self, weights):
        self.base = build_inverse_operator(self.A, weights, self.tol)
        self.Q = np.zeros((self.d, self.d))
        self.reference_weights = np.array(self.base.weights)
        self.rebuilds += 1
        self.update_log.append(("rebuild", self.calls, 0))
        return self


def smw_update(state, U, C):
    """Fold the change target += U C Uᵀ into the correction Q.

    Uses Q ← Q − Y'U(I + C UᵀY'U)⁻¹ C UᵀY' with Y' = Y + Q, which equals the
    textbook (C⁻¹ + UᵀY'U)⁻¹ form but does not need C to be invertible.
    When U has more columns than rows the r×r inner system is the larger
    one, so the same update is applied in d×d form instead:
    Y + Q ← ((Y + Q)⁻¹ + U C Uᵀ)⁻¹.
    """
    U = np.asarray(U, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    if U.ndim == 1:
        U = U[:, None]
    if C.ndim == 1 and U.shape[1] > 1:
        C = _Diag(C)
    else:
        C = np.atleast_2d(C)
    if U.shape[0] != state.d or C.shape != (U.shape[1], U.shape[1]):
        raise ValueError("U must be d×r and C r×r (or a length-r diagonal)")
    if not np.any(U) or not np.any(np.asarray(C)):
        return state
    if U.shape[1] > state.d:
        return _fold_dense(state, U, C)
    YU = state.apply(U)
    inner = np.eye(U.shape[1]) + C @ (U.T @ YU)
    _check_inner(inner)
    corr = YU @ np.linalg.solve(inner, C @ YU.T)
    Q = state.Q - corr
    state.Q = 0.5 * (Q + Q.T)
    state.update_log.append(("smw", state.calls, U.shape[1]))
    return state


class _Diag:
    """Diagonal r×r matrix stored as its diagonal; supports C @ X only."""

    def __init__(self, v):
        self.v = v
        self.shape = (v.shape[0], v.shape[0])

    def __matmul__(self, X):
        return self.v[:, None] * X if X.ndim == 2 else self.v * X

    def __array__(self, dtype=None, copy=None):
        return self.v


def _check_inner(inner):
    try:
        cond = np.linalg.cond(inner)
    except np.linalg.LinAlgError:
        cond = math.inf
    if not np.isfinite(cond) or cond > SMW_COND_LIMIT:
        raise UpdateRejected(f"inner system condition {cond:.3g} exceeds limit")


def _fold_dense(state, U, C):
    Yp = state.dense()
    Yp = 0.5 * (Yp + Yp.T)
    M = sla.inv(Yp) + U @ (C @ U.T)
    M = 0.5 * (M + M.T)
    _check_inner(M @ Yp)
    target = sla.inv(M)
    Q = 0.5 * (target + target.T) - state.base.dense()
    state.Q = 0.5 * (Q + Q.T)
    state.update_log.append(("smw-dense", state.calls, U.shape[1]))
    return state


def rebuild_if_due(state, period, weights):
    """Count one call; rebuild from ``weights`` when the count hits ``period``.

    ``period = math.inf`` never rebuilds, ``period = 1`` rebuilds every call.
    """
    state.calls += 1
    state.rebuilt_last = False
    if math.isfinite(period) and state.calls % int(period) == 0:
        state.rebuild(weights)
        state.rebuilt_last = True
    return state


def rebuild_period(n, m_knob, p):
    """⌈(n/m)^{(p−2)/(3p−2)}⌉, at least 1."""
    if p <= 2:
        return 1
    return max(1, int(math.ceil((n / m_knob) ** ((p - 2) / (3 * p - 2)))))
