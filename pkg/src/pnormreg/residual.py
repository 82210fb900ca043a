"""Residual problems and the multiplicative-weights solver for them.

A residual problem at a point with residual vector r asks for a step that
maximizes gᵀy − c_p·γ_p(|r|, y), where g = p|r|^{p−2}r and y ranges over a
subspace. Two subspaces occur:

* "null": y = Δ ∈ ℝⁿ with AᵀΔ = 0 (the min ‖x‖_p s.t. Aᵀx = b form);
* "range": y = Aδ with δ ∈ ℝᵈ (the min ‖Ax − b‖_p form; linear
  constraints on δ are removed beforehand by a null-space basis).

``solve_residual`` handles the γ-constrained variant min γ_p(t, y) s.t.
gᵀy = z with the multiplicative-weights loop and low-rank inverse
maintenance; ``approx_via_z_search`` turns it into an approximate maximizer
of the residual objective by scanning z.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from . import kernels
from .errors import ContractViolation, InfeasibleError, UpdateRejected
from .gamma import gamma_derivative, gamma_second
from .linsolve import MaintainedInverse, rebuild_if_due, rebuild_period, richardson_solve

log = logging.getLogger(__name__)

EPS_R = 1e-30


def bregman_constant(p):
    """c_p = (p − 1)/(p·2^p), the lower-side constant of the γ sandwich."""
    return (p - 1.0) / (p * 2.0**p)


def lemma_step(p):
    """Largest λ with λ^{min(1, p−1)} ≤ (p − 1)/(p·4^p)."""
    return ((p - 1.0) / (p * 4.0**p)) ** (1.0 / min(1.0, p - 1.0))


def residual_gradient(p, x, A=None, b=None, eps_r=EPS_R):
    """g = p·|r|^{p−2}⊙r with r = Ax − b (or r = x when A is None)."""
    if not p > 1:
        raise ContractViolation("p must exceed 1")
    x = np.asarray(x, dtype=np.float64)
    r = x if A is None else A.matvec(x) - (0.0 if b is None else np.asarray(b, float))
    ar = np.abs(r)
    if p < 2:
        ar = np.maximum(ar, eps_r)
    return p * ar ** (p - 2.0) * r


@dataclass
class ResidualProblem:
    A: object
    g: np.ndarray
    t: np.ndarray
    z: float
    p: float
    form: str = "null"

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64)
        n = self.A.n_rows
        if self.form not in ("null", "range"):
            raise ValueError("form must be 'null' or 'range'")
        if self.g.shape != (n,) or self.t.shape != (n,):
            raise ContractViolation("g and t need one entry per row of A")
        if np.any(self.t < 0):
            raise ContractViolation("thresholds must be nonnegative")

    @property
    def n(self):
        return self.A.n_rows

    def y_of(self, delta):
        return delta if self.form == "null" else self.A.matvec(delta)

    def gamma(self, delta):
        return kernels.gamma_sum(self.p, self.t, self.y_of(delta))

    def residual_value(self, delta, c=None):
        c = bregman_constant(self.p) if c is None else c
        y = self.y_of(delta)
        return float(self.g @ y) - c * kernels.gamma_sum(self.p, self.t, y)


# weighted least squares subproblems ----------------------------------------


def _richardson_apply(A, weights, rhs, inv, lam, tol, factor):
    """Solve (AᵀWA)u = rhs with Richardson, preconditioned by ``factor``·inv."""
    if inv is None:
        G = A.gram(weights)
        return sla.solve(G, rhs, assume_a="pos")
    res = richardson_solve(A, None, lambda v: factor * inv.apply(v), lam=lam, tol=tol,
                           weights=weights, rhs=rhs, raise_on_fail=False)
    if res.converged:
        return res.x
    # round-off floor of an ill-conditioned system: finish with a direct solve
    log.debug("Richardson stalled at %.3g; direct solve", res.residual_history[-1])
    return sla.solve(A.gram(weights), rhs, assume_a="pos")


def solve_weighted_lr(A, R, g, z, inv=None, lam=1.0, tol=1e-13):
    """min ½ΔᵀRΔ s.t. AᵀΔ = 0, gᵀΔ = z.

    With u = (AᵀR⁻¹A)⁻¹AᵀR⁻¹g and ν = z/(gᵀR⁻¹g − gᵀR⁻¹Au) the minimizer
    is Δ = R⁻¹(νg − Av), v = νu. ``inv`` applies an approximation of
    (AᵀR̂⁻¹A)⁻¹ for reference resistances R̂ ≤ R ≤ λR̂; it preconditions the
    Richardson solve for u.
    """
    R = np.asarray(R, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if np.any(R <= 0):
        raise ContractViolation("resistances must be positive")
    Rinv = 1.0 / R
    Rg = Rinv * g
    gRg = float(g @ Rg)
    if A is None or A.n_cols == 0:
        if gRg <= 0:
            raise InfeasibleError("g = 0: budget z cannot be met")
        return z * Rg / gRg
    rhs = A.rmatvec(Rg)
    u = _richardson_apply(A, Rinv, rhs, inv, lam, tol, lam)
    Au = A.matvec(u)
    denom = gRg - float(Rg @ Au)
    if denom <= 1e-14 * gRg:
        raise InfeasibleError("g lies in the constraint row space; no feasible step")
    nu = z / denom
    return Rinv * (nu * g - nu * Au)


def solve_weighted_range(A, R, g, z, inv=None, lam=1.0, tol=1e-13):
    """min ½(Aδ)ᵀR(Aδ) s.t. gᵀAδ = z, i.e. δ = z·G⁻¹h/(hᵀG⁻¹h), G = AᵀRA, h = Aᵀg.

    ``inv`` approximates (AᵀR̂A)⁻¹ for R̂ ≤ R ≤ λR̂.
    """
    R = np.asarray(R, dtype=np.float64)
    if np.any(R <= 0):
        raise ContractViolation("resistances must be positive")
    h = A.rmatvec(np.asarray(g, dtype=np.float64))
    if not np.any(h):
        raise InfeasibleError("Aᵀg = 0: budget z cannot be met")
    u = _richardson_apply(A, R, h, inv, lam, tol, 1.0)
    denom = float(h @ u)
    if denom <= 0:
        raise InfeasibleError("degenerate weighted system")
    return z * u / denom


# multiplicative weights -------------------------------------------------------


@dataclass
class MWUConfig:
    C: float = 1.0
    m_knob: float = 1.0
    rebuild_period: float | None = None
    max_iter: int | None = None
    tau_scale: float = 1.0
    richardson_tol: float = 1e-10
    inverse_tol: float | None = None


@dataclass
class MWUConstants:
    rho: float
    beta: float
    alpha: float
    tau: float
    T: int

    @classmethod
    def for_problem(cls, n, p, C=1.0, tau_scale=1.0):
        k = 3 * p - 2
        rho = C * n ** ((p * p - 4 * p + 2) / (p * k))
        beta = C * n ** ((p - 2) / k)
        alpha = C * n ** (-(p * p - 5 * p + 2) / (p * k))
        tau = tau_scale * C * n ** ((p - 1) * (p - 2) / k)
        T = max(1, int(math.ceil(n ** (1.0 / p) / alpha)))
        return cls(rho, beta, alpha, tau, T)


@dataclass
class WeightState:
    w: np.ndarray
    r: np.ndarray
    r_hat: np.ndarray
    counters: np.ndarray
    drift: np.ndarray
    i: int = 0
    max_drift: float = 0.0

    @classmethod
    def initial(cls, base, levels):
        n = base.shape[0]
        return cls(np.zeros(n), base.copy(), base.copy(),
                   np.zeros((n, levels), dtype=np.int64), np.zeros((n, levels)))


@dataclass
class ResidualSolution:
    delta: np.ndarray
    accepted: int
    iterations: int
    boosts: int
    forced: int
    rebuilds: int
    capped: bool
    update_ranks: list = field(default_factory=list)
    level_counts: dict = field(default_factory=dict)
    max_drift: float = 0.0
    constants: MWUConstants | None = None


def _levels(T):
    return max(1, int(math.ceil(math.log2(max(T, 2))))) + 2


def solve_residual(prob, config=None, trace=None):
    """Approximately minimize γ_p(t, y) subject to gᵀy = z on the problem's subspace.

    Assumes the normalization n^{−1/p} ≤ t ≤ 1 and an optimum ≤ 1 (the
    caller rescales). Each iteration solves a weighted least-squares problem
    with resistances r = (n^{1/p}t)^{p−2} + w^{p−2}; a cheap solution is
    averaged into the output and raises w additively, an expensive one
    multiplies w on its large coordinates. The inverse of the weighted
    normal matrix is kept as Y + Q: Y is rebuilt periodically, Q collects
    Sherman–Morrison–Woodbury updates for rows whose resistance drifted.
    """
    cfg = config or MWUConfig()
    p, n = prob.p, prob.n
    if p < 2:
        raise ContractViolation("solve_residual handles p ≥ 2; route p < 2 through the dual")
    null = prob.form == "null"
    A = prob.A

    def weights_of(r):
        return 1.0 / r if null else r

    def weighted(r, inv=None, lam=1.0):
        if null:
            return solve_weighted_lr(A, r, prob.g, prob.z, inv, lam, cfg.richardson_tol)
        return solve_weighted_range(A, r, prob.g, prob.z, inv, lam, cfg.richardson_tol)

    if p == 2:
        delta = weighted(np.ones(n))
        return ResidualSolution(delta, 1, 1, 0, 0, 0, False)

    const = MWUConstants.for_problem(n, p, cfg.C, cfg.tau_scale)
    max_iter = cfg.max_iter if cfg.max_iter is not None else 20 * const.T + 100
    period = cfg.rebuild_period or rebuild_period(n, cfg.m_knob, p)
    levels = _levels(max_iter)
    n1p = n ** (1.0 / p)
    base = (n1p * prob.t) ** (p - 2.0)
    if np.any(base <= 0):
        raise ContractViolation("thresholds must be positive (normalize to ≥ n^{-1/p})")
    state = WeightState.initial(base, levels)
    inv = MaintainedInverse.build(A, weights_of(state.r), cfg.inverse_tol)
    boost_factor = 4.0 ** (1.0 / (p - 2.0))

    x = np.zeros(A.n_rows if null else A.n_cols)
    mass = 0.0
    accepted = boosts = forced = 0
    ranks = []
    level_counts = {}
    i = 0
    while accepted < const.T and i < max_iter:
        # (1) periodic rebuild of the base inverse
        rebuild_if_due(inv, period, weights_of(state.r))
        if inv.rebuilt_last:
            state.r_hat = state.r.copy()
            state.counters[:] = 0
            state.drift[:] = 0.0

        # (2) weighted regression, preconditioned by the maintained inverse
        K = float(np.max(state.r / state.r_hat))
        delta = weighted(state.r, inv, max(K, 1.0))
        y = delta if null else A.matvec(delta)
        ay = np.abs(y)

        # (3) multiplicative weights
        r_old = state.r
        if float(np.sum(ay**p)) <= const.tau:
            step = "accept"
            state.w = state.w + const.alpha * ay
            x = x + const.alpha * delta
            mass += const.alpha
            accepted += 1
        else:
            hit = (ay >= const.rho) & (r_old <= const.beta)
            if hit.any():
                step = "boost"
                state.w[hit] = boost_factor * np.maximum(n1p, state.w[hit])
                boosts += 1
            else:
                # nothing left to penalize: take the step rather than stall
                step = "forced"
                state.w = state.w + const.alpha * ay
                x = x + const.alpha * delta
                mass += const.alpha
                accepted += 1
                forced += 1
        state.r = base + state.w ** (p - 2.0)

        # (4) bucket the resistance changes
        change = (state.r - r_old) / state.r_hat
        moved = np.flatnonzero(change > 0)
        if moved.size:
            eta = np.ceil(-np.log2(change[moved])).astype(np.int64)
            eta = np.clip(eta, 0, levels - 1)
            np.add.at(state.counters, (moved, eta), 1)
            np.add.at(state.drift, (moved, eta), change[moved])
        due = [e for e in range(levels) if (i + 1) % (2**e) == 0]
        E = np.zeros(n, dtype=bool)
        for e in due:
            flagged = state.counters[:, e] >= 2**e
            if flagged.any():
                level_counts[e] = level_counts.get(e, 0) + int(flagged.sum())
            E |= flagged
        rows = np.flatnonzero(E)

        # (5) low-rank update of the preconditioner on the rows in E
        if rows.size:
            state.r_hat[rows] = state.r[rows]
            state.counters[rows] = 0
            state.drift[rows] = 0.0
            try:
                inv.reweight(rows, weights_of(state.r[rows]))
            except UpdateRejected:
                inv.rebuild(weights_of(state.r_hat))
            ranks.append(int(rows.size))
        # drift still carried by unflushed counters after this iteration
        state.max_drift = max(state.max_drift, float(state.drift.max(initial=0.0)))
        state.i = i = i + 1
        if trace is not None:
            trace({"iter": i, "step": step, "gamma": kernels.gamma_sum(p, prob.t, y),
                   "E": int(rows.size), "rebuild": bool(inv.rebuilt_last), "K": K,
                   "state": state, "inverse": inv})

    capped = accepted < const.T
    if mass == 0.0:
        # never accepted: fall back to the last weighted solution
        x, mass = delta, 1.0
    return ResidualSolution(x / mass, accepted, i, boosts, forced, inv.rebuilds, capped,
                            ranks, level_counts, state.max_drift, const)


# exact residual maximization ----------------------------------------------------


def solve_residual_exact(A, g, t, p, form="null", c=None, tol=1e-13, max_iter=100,
                         weights=None, linear=None):
    """Maximize gᵀy − c·Σw_iγ_p(t_i, y_i) over the subspace by damped Newton.

    Returns (step, value). The objective is concave and C¹ with a piecewise
    continuous Hessian c·γ''. In the range form y = Aδ and the Newton
    system is d×d. In the null form the Hessian in y is diagonal, so the
    constrained Newton step D⁻¹(∇ − Aλ) with λ = (AᵀD⁻¹A)⁻¹AᵀD⁻¹∇ also
    needs only d×d solves. ``linear`` replaces the range-form linear term
    Aᵀg (used when γ is evaluated on a row sample only).
    """
    c = bregman_constant(p) if c is None else c
    g = np.asarray(g, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    w = np.ones(t.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    scale = float(np.max(t)) if np.any(t > 0) else 1.0
    tfloor = np.maximum(t, 1e-12 * scale)
    null = form == "null"
    if null:
        Ad = A.to_dense()
        lin = g
        k = A.n_rows
    else:
        B = A.to_dense()
        lin = B.T @ g if linear is None else np.asarray(linear, dtype=np.float64)
        k = B.shape[1]
    if k == 0:
        return np.zeros(0), 0.0

    def y_of(u):
        return u if null else B @ u

    def value(u):
        return float(lin @ u) - c * kernels.gamma_sum(p, t, y_of(u), w)

    u = np.zeros(k)
    f = 0.0
    for _ in range(max_iter):
        y = y_of(u)
        gy = c * w * gamma_derivative(p, t, y)
        curv = c * w * np.asarray(gamma_second(p, tfloor, y))
        curv = np.where(np.isfinite(curv) & (curv > 0), curv, 0.0)
        if null:
            grad = lin - gy
            Dinv = 1.0 / np.maximum(curv, 1e-300 + 1e-14 * curv.max())
            # λ = argmin ‖D^{-1/2}(grad − Aλ)‖ by QR: the normal equations
            # square a condition number that can reach 1e13 here
            sq = np.sqrt(Dinv / Dinv.max())
            lam = np.linalg.lstsq(sq[:, None] * Ad, sq * grad, rcond=None)[0]
            step = Dinv * (grad - Ad @ lam)
            dec = float(grad @ step)
        else:
            grad = lin - B.T @ gy
            H = B.T @ (curv[:, None] * B)
            H += 1e-14 * max(np.trace(H) / k, 1e-300) * np.eye(k)
            try:
                step = sla.solve(H, grad, assume_a="pos")
            except (np.linalg.LinAlgError, ValueError):
                step = np.linalg.lstsq(H, grad, rcond=None)[0]
            dec = float(grad @ step)
        if dec <= tol * max(abs(f), 1e-300):
            break
        s = 1.0
        while s > 1e-12:
            f_new = value(u + s * step)
            if f_new >= f + 1e-4 * s * dec:
                break
            s *= 0.5
        else:
            break
        u = u + s * step
        f = f_new
    return u, value(u)


# z search ---------------------------------------------------------------------------


@dataclass
class ZSearchResult:
    delta: np.ndarray
    value: float
    z: float
    grid: np.ndarray
    values: np.ndarray
    calls: int
    candidates: list = field(default_factory=list)


def normalize_thresholds(t, p):
    """(t', M): t' = max(t/M, n^{-1/p}) with M = max t, the scale the MWU
    solver expects. Clamping the lower end is what lets resistances start
    positive; it only enlarges γ and so keeps steps conservative."""
    t = np.asarray(t, dtype=np.float64)
    n = t.shape[0]
    M = float(t.max()) if t.size and t.max() > 0 else 1.0
    return np.maximum(t / M, n ** (-1.0 / p)), M


def quadratic_model_z(A, g, t, p, form="null"):
    """Budget z of the step that maximizes gᵀy − c_p(p/2)Σt^{p−2}y²."""
    c = bregman_constant(p)
    tn, M = normalize_thresholds(t, p)
    R = (M * tn) ** (p - 2.0)
    if form == "null":
        d1 = solve_weighted_lr(A, R, g, 1.0)
        y = d1
    else:
        d1 = solve_weighted_range(A, R, g, 1.0)
        y = A.matvec(d1)
    q = float(np.sum(R * y * y))
    return 1.0 / (c * p * q)


def z_grid(center, d, C=1.0, factor=4.0):
    """⌈C·log d⌉ geometric points around ``center`` (at least 3)."""
    k = max(3, int(math.ceil(C * math.log(max(d, 2)))))
    offs = np.arange(k) - (k - 1) / 2.0
    return center * factor**offs


def best_scale(g, t, y, p, c=None):
    """(s, value) maximizing s·gᵀy − c·γ_p(t, s·y) over s ≥ 0.

    The objective is concave in s, so its derivative is bracketed by doubling
    and its root found with Brent's method.
    """
    c = bregman_constant(p) if c is None else c
    a = float(g @ y)
    if a <= 0 or not np.any(y):
        return 0.0, 0.0

    def slope(s):
        return a - c * float(y @ gamma_derivative(p, t, s * y))

    hi = 1.0
    while slope(hi) > 0 and hi < 1e300:
        hi *= 4.0
    lo = hi / 4.0
    while slope(lo) < 0 and lo > 1e-300:
        lo /= 4.0
    s = brentq(slope, lo, hi, xtol=1e-15 * hi, rtol=1e-15) if slope(lo) > 0 > slope(hi) else lo
    return s, s * a - c * kernels.gamma_sum(p, t, s * y)


def approx_via_z_search(A, t, g, p, config=None, form="null", grid_C=1.0, max_extend=6,
                        extra_z=(), trace=None):
    """Approximate maximizer of gᵀy − c_p·γ_p(t, y) via γ-constrained solves.

    Each grid value of z is handed to ``solve_residual`` on the normalized
    problem; every candidate is rescaled to its best multiple and the one
    with the best residual objective wins. ``extra_z`` lists budgets, as
    multiples of the quadratic-model budget, that are only added to the
    candidate list.
    """
    g = np.asarray(g, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    tn, M = normalize_thresholds(t, p)
    try:
        center = quadratic_model_z(A, g, t, p, form)
    except InfeasibleError:
        zero = np.zeros(A.n_rows if form == "null" else A.n_cols)
        return ZSearchResult(zero, 0.0, 0.0, np.zeros(0), np.zeros(0), 0)
    grid = list(z_grid(center, A.n_cols, grid_C))
    c = bregman_constant(p)
    values = []
    best = None
    calls = 0
    candidates = []

    def evaluate(z):
        nonlocal best, calls
        # Δ for (t, z) is M·Δ' for the normalized (t/M, z/M) problem
        prob = ResidualProblem(A, g, tn, z / M, p, form)
        try:
            sol = solve_residual(prob, config)
        except InfeasibleError:
            return -np.inf
        calls += 1
        delta = M * sol.delta
        y = delta if form == "null" else A.matvec(delta)
        s, val = best_scale(g, t, y, p, c)
        if trace is not None:
            trace({"z": float(z), "value": float(val), "accepted": sol.accepted,
                   "iterations": sol.iterations})
        candidates.append(s * delta)
        if best is None or val > best[0]:
            best = (val, s * delta)
        return val

    values = [evaluate(z) for z in grid]
    # the quadratic model can miss z* by a few grid steps; walk outward from
    # whichever end holds the best value
    for _ in range(max_extend):
        k = int(np.argmax(values))
        if 0 < k < len(grid) - 1:
            break
        step = grid[1] / grid[0]
        if k == 0:
            grid.insert(0, grid[0] / step)
            values.insert(0, evaluate(grid[0]))
        else:
            grid.append(grid[-1] * step)
            values.append(evaluate(grid[-1]))
    grid = np.asarray(grid)
    values = np.asarray(values)
    for mult in extra_z:
        evaluate(center * mult)
    if best is None:
        zero = np.zeros(A.n_rows if form == "null" else A.n_cols)
        return ZSearchResult(zero, 0.0, 0.0, grid, values, calls)
    val, delta = best
    y = delta if form == "null" else A.matvec(delta)
    return ZSearchResult(delta, float(val), float(g @ y), grid, values, calls, candidates)
