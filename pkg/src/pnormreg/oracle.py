"""Dense reference solvers used by tests and the acceptance checks.

Nothing here imports the solver modules: the point is to have answers
computed a different way. Everything is dense and refuses large inputs.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

MAX_N = 1024
MAX_D = 64
MAX_KKT = 500


def _dense(A):
    if A is None:
        return None
    if hasattr(A, "to_dense"):
        return A.to_dense()
    return np.asarray(A, dtype=np.float64)


@dataclass
class OracleResult:
    x: np.ndarray
    value: float
    tolerance: float
    method: str
    converged: bool = True
    iterations: int = 0
    min_hessian_eig: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def flagged(self):
        return not self.converged or self.tolerance > 1e-10


def kkt_solve(R, A, g, z):
    """min ½ΔᵀRΔ s.t. AᵀΔ = 0, gᵀΔ = z by one dense KKT factorization.

    R is a vector of positive diagonal entries; A may be None (no subspace
    constraint). Returns an OracleResult whose tolerance is the larger
    constraint residual.
    """
    R = np.asarray(R, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    n = R.shape[0]
    if n > MAX_KKT:
        raise ValueError(f"kkt_solve is limited to n ≤ {MAX_KKT}")
    Ad = np.zeros((n, 0)) if A is None else _dense(A)
    B = np.column_stack([Ad, g])
    k = B.shape[1]
    K = np.zeros((n + k, n + k))
    K[:n, :n] = np.diag(R)
    K[:n, n:] = B
    K[n:, :n] = B.T
    rhs = np.zeros(n + k)
    rhs[-1] = z
    try:
        with warnings.catch_warnings():
            # a singular K is reported through the condition check below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(K, check_finite=True)
        sol = sla.lu_solve(lu, rhs)
        rc = np.linalg.cond(K)
    except (np.linalg.LinAlgError, ValueError):
        rc = math.inf
    if not np.isfinite(rc) or rc > 1e14:
        return OracleResult(np.full(n, np.nan), math.nan, math.inf, "kkt:degenerate", False)
    delta = sol[:n]
    feas = max(float(np.max(np.abs(Ad.T @ delta), initial=0.0)), abs(float(g @ delta) - z))
    return OracleResult(delta, 0.5 * float(delta @ (R * delta)), feas, "kkt")


def least_squares(A, b, C=None, v=None):
    """min ‖Ax − b‖₂ s.t. Cx = v through the dense KKT system."""
    Ad = _dense(A)
    b = np.asarray(b, dtype=np.float64)
    d = Ad.shape[1]
    if C is None:
        return np.linalg.lstsq(Ad, b, rcond=None)[0]
    Cd = _dense(C)
    N, xp = _constraint_basis(Cd, np.asarray(v, dtype=np.float64))
    u = np.linalg.lstsq(Ad @ N, b - Ad @ xp, rcond=None)[0]
    return xp + N @ u if N.shape[1] else xp


def _constraint_basis(Cd, v):
    """(null-space basis of C, particular solution of Cx = v)."""
    xp = np.linalg.lstsq(Cd, v, rcond=None)[0]
    if np.linalg.norm(Cd @ xp - v) > 1e-9 * max(1.0, np.linalg.norm(v)):
        raise ValueError("Cx = v is inconsistent")
    return sla.null_space(Cd), xp


def _phi(p, r, mu):
    s = r * r + mu * mu
    val = s ** (p / 2) - mu**p
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.where(s > 0, p * r * s ** (p / 2 - 1), 0.0)
        d2 = p * s ** (p / 2 - 2) * ((p - 1) * r * r + mu * mu)
    # at r = μ = 0 the curvature is +∞ for p < 2 and 0 for p > 2
    d2 = np.where(np.isfinite(d2), d2, np.inf if p < 2 else 0.0)
    return val, d1, d2


def _spd_solve(H, g):
    # Hessians near a kink of |r|^p are badly conditioned by nature; the
    # Newton decrement test decides whether the step was good enough
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        return sla.solve(H, g, assume_a="pos")


def _curvature_floor(p, mu, r):
    """Lower clamp on φ'' so Newton steps stay bounded where |r|^{p−2} → 0."""
    if mu > 0 or p < 2:
        return 1e-300
    return p * (p - 1) * (1e-12 * max(float(np.abs(r).max()), 1e-300)) ** (p - 2)


def _newton(B, c, p, u, mu, tol, max_iter=200):
    """Minimize Σφ_μ(Bu − c) by damped Newton; returns (u, iterations, decrement)."""
    k = B.shape[1]
    dec = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        r = B @ u - c
        f, d1, d2 = _phi(p, r, mu)
        f = float(f.sum())
        grad = B.T @ d1
        d2 = np.minimum(np.maximum(d2, _curvature_floor(p, mu, r)), 1e300)
        H = B.T @ (d2[:, None] * B)
        H += 1e-15 * (np.trace(H) / max(k, 1)) * np.eye(k)
        try:
            step = _spd_solve(H, grad)
        except (np.linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        dec = float(grad @ step)
        if dec <= tol * max(f, 1e-300):
            break
        s = 1.0
        while s > 1e-14:
            fn = float(_phi(p, B @ (u - s * step) - c, mu)[0].sum())
            if fn <= f - 1e-4 * s * dec:
                break
            s *= 0.5
        else:
            break
        u = u - s * step
    return u, it, dec


def _minimize_sum(B, c, p, tol, u0=None):
    """min_u Σ|Bu − c|^p with smoothing continuation; dense Newton throughout."""
    k = B.shape[1]
    u = np.linalg.lstsq(B, c, rcond=None)[0] if u0 is None or p == 2 else np.array(u0, dtype=float)
    iters = 0
    if p != 2:
        scale = max(float(np.max(np.abs(B @ u - c))), 1e-300)
        # smoothing only matters where |r|^{p−2} blows up, i.e. p < 2
        mu = scale if p < 2 else 0.0
        while mu > 1e-9 * scale:
            u, it, _ = _newton(B, c, p, u, mu, 1e-10)
            iters += it
            mu /= 10.0
        final_mu = 0.0
        u, it, dec = _newton(B, c, p, u, final_mu, tol)
        iters += it
    else:
        dec = 0.0
    r = B @ u - c
    val = float(np.sum(np.abs(r) ** p))
    grad = B.T @ (p * np.abs(r) ** (p - 1) * np.sign(r))
    with np.errstate(divide="ignore"):
        d2 = p * (p - 1) * np.abs(r) ** (p - 2)
    d2 = np.where(np.isfinite(d2), d2, 0.0)
    H = B.T @ (d2[:, None] * B)
    min_eig = float(sla.eigh(H, eigvals_only=True)[0]) if k else 0.0
    return u, val, iters, dec, grad, min_eig


def _newton_kkt(Ad, x, p, mu, tol, max_iter=200):
    """Minimize Σφ_μ(x) on {Aᵀx = const} by Newton steps with diagonal Hessian D:
    Δ = D⁻¹(∇ − Aλ), λ = (AᵀD⁻¹A)⁻¹AᵀD⁻¹∇, so only d×d systems are factored."""
    dec = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        f, d1, d2 = _phi(p, x, mu)
        f = float(f.sum())
        Dinv = 1.0 / np.maximum(d2, _curvature_floor(p, mu, x))
        # λ does not depend on the overall scale of D⁻¹; normalizing keeps G finite
        Dn = Dinv / Dinv.max()
        G = Ad.T @ (Dn[:, None] * Ad)
        try:
            lam = _spd_solve(G, Ad.T @ (Dn * d1))
        except (np.linalg.LinAlgError, ValueError):
            lam = np.linalg.lstsq(G, Ad.T @ (Dn * d1), rcond=None)[0]
        step = Dinv * (d1 - Ad @ lam)
        dec = float(d1 @ step)
        if dec <= tol * max(f, 1e-300):
            break
        s = 1.0
        while s > 1e-14:
            fn = float(_phi(p, x - s * step, mu)[0].sum())
            if fn <= f - 1e-4 * s * dec:
                break
            s *= 0.5
        else:
            break
        x = x - s * step
    return x, it, dec


def _minimize_p2(Ad, b, p, tol, x0=None):
    xp = np.linalg.lstsq(Ad.T, b, rcond=None)[0]
    x = xp if x0 is None or p == 2 else np.asarray(x0, dtype=float)
    iters = 0
    dec = 0.0
    if p != 2:
        scale = max(float(np.max(np.abs(x))), 1e-300)
        mu = scale if p < 2 else 0.0
        while mu > 1e-9 * scale:
            x, it, _ = _newton_kkt(Ad, x, p, mu, 1e-10)
            iters += it
            mu /= 10.0
        x, it, dec = _newton_kkt(Ad, x, p, 0.0, tol)
        iters += it
    return x, iters, dec


def _p2_kkt_result(Ad, b, p, tol, x0):
    x, iters, dec = _minimize_p2(Ad, b, p, tol, x0)
    val = float(np.sum(np.abs(x) ** p))
    ax = np.abs(x)
    with np.errstate(divide="ignore"):
        d2 = p * (p - 1) * ax ** (p - 2)
    grad = p * ax ** (p - 1) * np.sign(x)
    resid = grad - Ad @ np.linalg.lstsq(Ad, grad, rcond=None)[0]
    gap = 0.5 * dec
    converged = bool(np.isfinite(val) and abs(gap) <= max(1e-10 * val, 1e-300))
    # on the null space of Aᵀ the Hessian is diagonal and nonnegative
    min_eig = float(np.min(np.where(np.isfinite(d2), d2, np.inf)))
    return OracleResult(x, val, abs(gap) / max(val, 1e-300), "oracle:newton:p2", converged,
                        iters, min_eig, {"grad_norm": float(np.linalg.norm(resid))})


def pnorm_oracle(A, b, C=None, v=None, p=2.0, tol=1e-22, form="p1", x0=None):
    """High-accuracy reference optimum.

    form "p1": min ‖Ax − b‖_p^p subject to Cx = v (C optional).
    form "p2": min ‖x‖_p^p subject to Aᵀx = b.

    Both reduce to an unconstrained min_u Σ|Bu − c|^p over a null-space
    parametrization, which is then solved by Newton on (r² + μ²)^{p/2}
    with μ driven to zero and a final Newton pass on the true objective.
    ``tol`` bounds the final Newton decrement relative to the objective.
    """
    Ad = _dense(A)
    b = np.asarray(b, dtype=np.float64)
    n, d = Ad.shape
    if n > MAX_N or d > MAX_D:
        raise ValueError(f"oracle is limited to n ≤ {MAX_N}, d ≤ {MAX_D}")
    if p <= 1:
        raise ValueError("p must exceed 1")
    if form == "p1":
        if C is not None:
            N, xp = _constraint_basis(_dense(C), np.asarray(v, dtype=np.float64))
        else:
            N, xp = np.eye(d), np.zeros(d)
        B, c = Ad @ N, b - Ad @ xp
        lift = lambda u: xp + N @ u  # noqa: E731
        u0 = None if x0 is None else np.linalg.lstsq(N, np.asarray(x0) - xp, rcond=None)[0]
    elif form == "p2":
        xp = np.linalg.lstsq(Ad.T, b, rcond=None)[0]
        if np.linalg.norm(Ad.T @ xp - b) > 1e-9 * max(1.0, np.linalg.norm(b)):
            raise ValueError("Aᵀx = b is inconsistent")
        if x0 is not None:
            x0 = np.asarray(x0, dtype=float)
            # project the start back onto the affine constraint set
            x0 = x0 - np.linalg.lstsq(Ad.T, Ad.T @ x0 - b, rcond=None)[0]
        if p < 2:
            # diagonal-Hessian KKT steps: cheap, and D⁻¹ stays bounded for p < 2
            return _p2_kkt_result(Ad, b, p, tol, x0)
        N = sla.null_space(Ad.T)
        B, c = N, -xp
        lift = lambda u: xp + N @ u  # noqa: E731
        u0 = None if x0 is None else N.T @ (x0 - xp)
    else:
        raise ValueError("form must be 'p1' or 'p2'")
    if B.shape[1] == 0:
        x = lift(np.zeros(0))
        r = Ad @ x - b if form == "p1" else x
        return OracleResult(x, float(np.sum(np.abs(r) ** p)), 0.0, "oracle:trivial")
    u, val, iters, dec, grad, min_eig = _minimize_sum(B, c, p, tol, u0)
    gap = 0.5 * dec
    converged = np.isfinite(val) and gap <= max(1e-10 * val, 1e-300)
    if not converged:
        log.warning("oracle did not converge (decrement %.3g)", dec)
    x = lift(u)
    psd_ok = min_eig >= -1e-9 * max(1.0, abs(min_eig))
    return OracleResult(x, val, gap / max(val, 1e-300), f"oracle:newton:{form}",
                        bool(converged and psd_ok), iters, min_eig,
                        {"grad_norm": float(np.linalg.norm(grad))})


@dataclass
class FDResult:
    gradient: np.ndarray
    error: np.ndarray


def finite_difference(f, x, h_grid=(1e-2, 5e-3, 2.5e-3)):
    """Central differences at each h, combined by Richardson extrapolation.

    The error estimate is the gap between the last two extrapolation levels.
    """
    x = np.asarray(x, dtype=np.float64)
    hs = np.asarray(h_grid, dtype=np.float64)
    if hs.size < 2:
        raise ValueError("need at least two step sizes")
    scale = np.maximum(1.0, np.abs(x))
    D = np.zeros((hs.size, x.size))
    for k, h in enumerate(hs):
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h * scale[i]
            D[k, i] = (f(x + e) - f(x - e)) / (2 * h * scale[i])
    # Neville table in h²
    T = [D]
    for m in range(1, hs.size):
        prev = T[-1]
        ratio = (hs[: hs.size - m] / hs[m:]) ** 2
        nxt = (ratio[:, None] * prev[1:] - prev[:-1]) / (ratio[:, None] - 1.0)
        T.append(nxt)
    best = T[-1][-1]
    err = np.abs(T[-1][-1] - T[-2][-1])
    return FDResult(best, err)
