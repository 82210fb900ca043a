"""Leverage scores, the Sample primitive, spectral approximation and Lewis weights."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ContractViolation, DivergenceError, RankDeficientError
from .linsolve import build_inverse_operator
from .sparse import SparseMatrix, as_rng

log = logging.getLogger(__name__)

RANK_RTOL = 1e-12


@dataclass
class LeverageEstimate:
    values: np.ndarray
    is_overestimate: bool = False
    rank_deficient: bool = False

    @property
    def sum(self):
        return float(np.sum(self.values))

    def __len__(self):
        return len(self.values)


@dataclass
class RowSample:
    """Kept row ids with their rescaling factors.

    ``kind`` is "spectral" (weights p^{-1/2} times an optional global scale)
    or "gamma" (weights are the cumulative 1/p products of the γ sampler).
    """

    indices: np.ndarray
    weights: np.ndarray
    probabilities: np.ndarray
    n: int
    kind: str = "spectral"
    scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.indices)

    def apply(self, A):
        """SA as a SparseMatrix with len(self) rows."""
        return A.take_rows(self.indices).scale_rows(self.weights)

    def dense_weights(self):
        out = np.zeros(self.n)
        out[self.indices] = self.weights
        return out

    def to_json(self):
        return {"indices": self.indices.tolist(), "weights": self.weights.tolist(),
                "probabilities": self.probabilities.tolist(), "kind": self.kind}


def _logd(d):
    # log 1 = 0 would zero every probability when d = 1
    return math.log(max(d, 2))


def sample_rows(u, alpha, c, rng, d, scale=1.0):
    """Keep row i with p_i = min{1, α·u_i·c·log d}; kept rows get scale/√p_i."""
    if alpha <= 0 or c <= 0:
        raise ContractViolation("alpha and c must be positive")
    u = np.asarray(getattr(u, "values", u), dtype=np.float64)
    rng = as_rng(rng)
    with np.errstate(invalid="ignore"):
        p = np.minimum(1.0, alpha * u * c * _logd(d))
    p[~np.isfinite(p)] = 1.0
    keep = np.flatnonzero(rng.random(u.shape[0]) < p)
    return RowSample(keep, scale / np.sqrt(p[keep]), p[keep], u.shape[0],
                     kind="spectral", scale=scale)


def _range_basis(gram, rtol=RANK_RTOL):
    """(basis of range scaled by λ^{-1/2}, null basis, rank_deficient flag)."""
    lam, V = sla.eigh(gram)
    cutoff = rtol * max(lam.max(), 0.0)
    keep = lam > cutoff
    return V[:, keep] / np.sqrt(lam[keep]), V[:, ~keep], not keep.all()


def leverage_scores_exact(A):
    """τ_i = a_iᵀ(AᵀA)⁺a_i via a dense factorization of the Gram matrix."""
    G = A.gram()
    try:
        L = sla.cholesky(G, lower=True)
        cond_ok = np.min(np.diag(L)) > math.sqrt(RANK_RTOL) * np.max(np.diag(L))
    except np.linalg.LinAlgError:
        cond_ok = False
    if cond_ok:
        basis = sla.solve_triangular(L, np.eye(A.n_cols), lower=True).T
        return LeverageEstimate(A.row_sqnorms(basis))
    basis, _, _ = _range_basis(G)
    log.info("leverage scores: rank-deficient input, using pseudoinverse")
    return LeverageEstimate(A.row_sqnorms(basis), rank_deficient=True)


def generalized_leverage_scores(A, B):
    """τ_i^B = a_iᵀ(BᵀB)⁺a_i when a_i ⊥ ker B, +∞ otherwise."""
    if A.n_cols != B.n_cols:
        raise ValueError("A and B must have the same number of columns")
    basis, null, deficient = _range_basis(B.gram())
    vals = A.row_sqnorms(basis)
    if null.shape[1]:
        leak = A.row_sqnorms(null)
        norms = A.row_sqnorms(np.eye(A.n_cols))
        vals[leak > 1e-18 + 1e-10 * norms] = np.inf
    return LeverageEstimate(vals, rank_deficient=deficient)


def jl_rows(n, d):
    """Sketch size r = (4000/9)(11 log d + log(n/d))."""
    return int(math.ceil((4000.0 / 9.0) * (11 * _logd(d) + math.log(max(n / d, 1.0)))))


def estimate_leverage_jl(A, S, inv, r, rng, mode="factored"):
    """Overestimates u_i = (1 + 1/(n⁹−1))·‖M a_i‖²/(0.9r), M = G(SA)Z.

    ``S`` is a RowSample (or an already formed SA) and ``inv`` an
    InverseOperator for (SA)ᵀ(SA). In "explicit" mode G is an r×|S| Gaussian
    and G(SA) is formed directly. "factored" mode draws an r×d Gaussian G'
    and uses G'R, where SA = QR is a thin QR factorization; since G Q has
    iid standard normal entries the two products are equal in distribution.
    """
    if r < 1:
        raise ContractViolation("sketch size must be at least 1")
    rng = as_rng(rng)
    SA = S.apply(A) if isinstance(S, RowSample) else S
    n, d = A.shape
    if mode == "explicit":
        K = np.zeros((r, d))
        chunk = max(1, 4_000_000 // max(SA.n_rows, 1))
        for lo in range(0, r, chunk):
            hi = min(r, lo + chunk)
            G = rng.standard_normal((hi - lo, SA.n_rows))
            K[lo:hi] = SA.rmatmat(G.T).T
    elif mode == "factored":
        R = sla.qr(SA.to_dense(), mode="r")[0][:d]
        K = rng.standard_normal((r, R.shape[0])) @ R
    else:
        raise ValueError(f"unknown JL mode {mode!r}")
    M = inv.apply(K.T).T
    # ‖M a‖² = aᵀ(MᵀM)a, evaluated through a square root of the d×d Gram
    H = M.T @ M
    lam, V = sla.eigh(0.5 * (H + H.T))
    root = V * np.sqrt(np.clip(lam, 0.0, None))
    factor = (1.0 + 1.0 / (float(n) ** 9 - 1.0)) / (0.9 * r) if n > 1 else 1.0 / (0.9 * r)
    return LeverageEstimate(factor * A.row_sqnorms(root), is_overestimate=True)


@dataclass
class SpectralConfig:
    c: float = 30.0
    r: int | None = None
    max_retries: int = 8
    jl_mode: str = "factored"
    inverse_tol: float | None = None


@dataclass
class SpectralResult:
    At: SparseMatrix
    sample: RowSample
    u: LeverageEstimate
    rounds: int
    retries: int
    history: list


def spectral_approximation(A, rng=None, config=None):
    """Constant-factor spectral approximation by iterated leverage refinement.

    Returns Ã = SA with (1/3)AᵀA ⪯ ÃᵀÃ ⪯ AᵀA with high probability.
    """
    cfg = config or SpectralConfig()
    rng = as_rng(rng)
    n, d = A.shape
    if n < d:
        raise ContractViolation("spectral approximation needs n ≥ d")
    r = cfg.r or jl_rows(n, d)
    u = np.ones(n)
    z = max(0, int(math.ceil(math.log(n / d)))) if n > d else 0
    history = [float(u.sum())]
    retries = 0
    for i in range(1, z + 1):
        # the undersampling argument needs α ≤ 1; past ‖u‖₁ = 12d the printed
        # ratio would exceed it and the estimates stop being overestimates
        alpha = min(1.0, 12.0 * d / u.sum())
        for attempt in range(cfg.max_retries + 1):
            S = sample_rows(u, 9 * alpha, cfg.c, rng, d, scale=math.sqrt(3 * alpha / 4))
            SA = S.apply(A)
            try:
                inv = build_inverse_operator(SA, tol=cfg.inverse_tol)
                break
            except RankDeficientError:
                retries += 1
                log.info("round %d: rank-deficient sample, doubling alpha", i)
                alpha *= 2.0
        else:
            raise RankDeficientError(f"round {i}: sample stayed rank-deficient")
        v = estimate_leverage_jl(A, SA, inv, r, rng, mode=cfg.jl_mode)
        u = np.minimum(u, v.values)
        history.append(float(u.sum()))
    S = sample_rows(u, 4.0, cfg.c, rng, d, scale=1.0 / math.sqrt(1.5))
    At = S.apply(A)
    return SpectralResult(At, S, LeverageEstimate(u, is_overestimate=True), z, retries,
                          history)


def spectral_bounds(A, At):
    """Extreme generalized eigenvalues of (ÃᵀÃ, AᵀA)."""
    mu = sla.eigh(At.gram(), A.gram(), eigvals_only=True)
    return float(mu.min()), float(mu.max())


@dataclass
class LewisResult:
    weights: np.ndarray
    residual: float
    iterations: int
    floored: bool


def lewis_weights(A, p, iters=100, eps_w=1e-300, tol=0.0):
    """Fixed point w = τ(W^{1/2−1/p}A) from w⁽⁰⁾ ≡ d/n."""
    if p < 2:
        raise ContractViolation("Lewis weights iteration requires p ≥ 2")
    n, d = A.shape
    w = np.full(n, d / n)
    e = 0.5 - 1.0 / p
    floored = False

    def tau(w):
        return leverage_scores_exact(A.scale_rows(w ** e)).values

    k = 0
    for k in range(1, iters + 1):
        w_new = tau(w)
        if np.any(w_new < eps_w):
            floored = True
            w_new = np.maximum(w_new, eps_w)
        step = np.max(np.abs(w_new - w) / w)
        w = w_new
        if step <= tol:
            break
    if not np.all(np.isfinite(w)):
        raise DivergenceError("Lewis weight iteration produced non-finite weights")
    residual = float(np.max(np.abs(w - tau(w)) / w))
    return LewisResult(w, residual, k, floored)
