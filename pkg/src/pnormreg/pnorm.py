"""Outer solvers for p-norm regression.

Two problem forms are supported:

    P1: min ‖Ax − b‖_p^p, optionally subject to Cx = v
    P2: min ‖x‖_p^p subject to Aᵀx = b

The main route is iterative refinement: at the current point build the
residual problem, solve it approximately, and move along the returned
direction. A certified lower bound on the optimum comes from the Fenchel
dual evaluated at the projected gradient, which gives the stopping rule.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq

from . import kernels
from .errors import (ContractViolation, DimensionError, DivergenceError, InfeasibleError,
                     RankDeficientError)
from .gamma import DEFAULT_C_H, gamma_sample, quadratic_extension
from .leverage import (RowSample, SpectralConfig, lewis_weights, leverage_scores_exact,
                       sample_rows, spectral_approximation)
from .linsolve import build_inverse_operator, richardson_solve
from .residual import (MWUConfig, approx_via_z_search, bregman_constant, lemma_step,
                       solve_residual_exact)
from .sparse import SparseMatrix, as_rng

log = logging.getLogger(__name__)

FORMS = ("p1", "p2")
METHODS = ("residual", "homotopy", "dual-auto")
RESIDUAL_SOLVERS = ("auto", "mwu", "newton", "sampled")
DENSE_FIT_MAX = 20_000_000


def _dense(M):
    if M is None:
        return None
    return M.to_dense() if hasattr(M, "to_dense") else np.atleast_2d(np.asarray(M, float))


@dataclass
class RegressionProblem:
    A: SparseMatrix
    b: np.ndarray | None = None
    C: object = None
    v: np.ndarray | None = None
    p: float = 2.0
    form: str = "p1"

    def __post_init__(self):
        if not isinstance(self.A, SparseMatrix):
            self.A = SparseMatrix.from_dense(np.asarray(self.A, dtype=np.float64))
        if self.form not in FORMS:
            raise ContractViolation(f"form must be one of {FORMS}")
        if not self.p > 1 or not math.isfinite(self.p):
            raise ContractViolation("p must be a finite number greater than 1")
        n, d = self.A.shape
        if self.b is not None:
            self.b = np.asarray(self.b, dtype=np.float64)
        if self.form == "p1":
            if self.b is None:
                self.b = np.zeros(n)
            if self.b.shape != (n,):
                raise DimensionError(f"P1 needs b of length {n}, got {self.b.shape}")
            if (self.C is None) != (self.v is None):
                raise ContractViolation("C and v must be given together")
            if self.C is not None:
                Cd = _dense(self.C)
                self.v = np.asarray(self.v, dtype=np.float64)
                if Cd.shape[1] != d or self.v.shape != (Cd.shape[0],):
                    raise DimensionError("C must have d columns and v one entry per row of C")
        else:
            if self.C is not None or self.v is not None:
                raise ContractViolation("P2 takes no C/v constraint")
            if self.b is None or self.b.shape != (d,):
                raise DimensionError(f"P2 needs b of length {d}")

    @property
    def n(self):
        return self.A.n_rows

    @property
    def d(self):
        return self.A.n_cols

    def residual(self, x):
        return self.A.matvec(x) - self.b if self.form == "p1" else np.asarray(x, float)

    def objective(self, x):
        return float(np.sum(np.abs(self.residual(x)) ** self.p))

    def constraint_residual(self, x):
        if self.form == "p2":
            return float(np.max(np.abs(self.A.rmatvec(x) - self.b), initial=0.0))
        if self.C is None:
            return 0.0
        return float(np.max(np.abs(_dense(self.C) @ x - self.v), initial=0.0))


@dataclass
class SolveConfig:
    method: str = "dual-auto"
    residual_solver: str = "auto"
    sampled: bool = False
    step_rule: str = "line-search"
    max_outer: int = 300
    mwu: MWUConfig = field(default_factory=MWUConfig)
    grid_C: float = 1.0
    C_h: float = DEFAULT_C_H
    spectral_c: float = 30.0
    lsq_tol: float = 1e-14
    seed: int = 0
    trace: object = None
    homotopy_phase_iters: int = 200
    newton_candidates: int = 4
    dual_max_outer: int = 25
    dual_eps: float = 1e-4

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractViolation(f"method must be one of {METHODS}")
        if self.residual_solver not in RESIDUAL_SOLVERS:
            raise ContractViolation(f"residual solver must be one of {RESIDUAL_SOLVERS}")
        if self.step_rule not in ("line-search", "lemma"):
            raise ContractViolation("step rule must be 'line-search' or 'lemma'")
        for name in ("grid_C", "C_h", "spectral_c", "lsq_tol"):
            if not getattr(self, name) > 0:
                raise ContractViolation(f"{name} must be positive")


@dataclass
class SolveReport:
    x: np.ndarray
    objective: float
    lower_bound: float
    gap: float
    iterations: int
    residual_calls: int
    wall_time: float
    seed: int
    method: str
    route: str
    converged: bool
    p: float
    form: str
    n: int
    d: int
    nnz: int
    constraint_residual: float = 0.0
    history: list = field(default_factory=list)

    def to_json(self, include_history=True):
        out = {
            "form": self.form, "p": self.p, "n": self.n, "d": self.d, "nnz": self.nnz,
            "method": self.method, "route": self.route, "seed": self.seed,
            "converged": bool(self.converged), "objective": self.objective,
            "lower_bound": self.lower_bound, "gap": self.gap,
            "constraint_residual": self.constraint_residual,
            "iterations": self.iterations, "residual_calls": self.residual_calls,
            "wall_time": self.wall_time, "x": [float(v) for v in self.x],
        }
        if include_history:
            out["history"] = [{k: v for k, v in h.items()} for h in self.history]
        return out


# least squares -----------------------------------------------------------------


def linear_regression(A, b, rng=None, weights=None, tol=1e-14, spectral_c=30.0):
    """argmin ‖W^{1/2}(Ax − b)‖₂ by Richardson preconditioned with a spectral
    approximation of W^{1/2}A.

    When sampling would keep every row anyway the matrix itself is used.
    """
    n, d = A.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    WA = A.scale_rows(np.sqrt(w))
    if d == 0:
        return np.zeros(0)
    lam = 1.0
    small = n <= 2 * spectral_c * d * math.log(max(d, 2))
    if small:
        inv = build_inverse_operator(WA)
    else:
        At = spectral_approximation(WA, as_rng(rng), SpectralConfig(c=spectral_c)).At
        inv = build_inverse_operator(At)
        lam = 4.0
    for _ in range(4):
        try:
            res = richardson_solve(A, b, inv, lam=lam, tol=tol, weights=w)
            return res.x
        except DivergenceError:
            lam *= 2.0
    raise DivergenceError("least-squares Richardson loop did not converge")


def _reduce_constraints(prob):
    """(N, x_p): x = x_p + N u spans {Cx = v}. N is None when unconstrained."""
    if prob.C is None:
        return None, np.zeros(prob.d)
    Cd = _dense(prob.C)
    xp = np.linalg.lstsq(Cd, prob.v, rcond=None)[0]
    if np.linalg.norm(Cd @ xp - prob.v) > 1e-9 * max(1.0, np.linalg.norm(prob.v)):
        raise InfeasibleError("constraints Cx = v are inconsistent")
    return sla.null_space(Cd), xp


def initial_point(prob, rng=None, tol=1e-14):
    """Least-squares start: argmin_{Cx=v}‖Ax − b‖₂ for P1, the min-2-norm
    feasible point A(AᵀA)⁻¹b for P2."""
    if prob.form == "p2":
        inv = build_inverse_operator(prob.A)
        y = richardson_solve(prob.A, None, inv, tol=tol, rhs=prob.b).x
        return prob.A.matvec(y)
    N, xp = _reduce_constraints(prob)
    if N is None:
        return linear_regression(prob.A, prob.b, rng, tol=tol)
    if N.shape[1] == 0:
        return xp
    AN = SparseMatrix.from_dense(prob.A.matmat(N))
    u = linear_regression(AN, prob.b - prob.A.matvec(xp), rng, tol=tol)
    return xp + N @ u


# refinement engine ----------------------------------------------------------------


def _conj(p, u):
    """Σφ*(u) for φ = |·|^p: φ*(u) = (p − 1)(|u|/p)^{p/(p−1)}."""
    q = p / (p - 1.0)
    return float((p - 1.0) * np.sum((np.abs(u) / p) ** q))


def _scaled_dual(p, a, u):
    """max_s s·a − Σφ*(s·u) over s ≥ 0 (φ* is q-homogeneous)."""
    K = _conj(p, u)
    if a <= 0 or K <= 0:
        return 0.0
    q = p / (p - 1.0)
    s = (a / (q * K)) ** (1.0 / (q - 1.0))
    return s * a - K * s**q


def _line_search(r, y, p):
    """argmin_{s ≥ 0} Σ|r − s·y|^p via the root of the (monotone) derivative."""

    def slope(s):
        e = r - s * y
        return -float(y @ (p * np.abs(e) ** (p - 1.0) * np.sign(e)))

    if slope(0.0) >= 0:
        return 0.0
    hi = 1.0
    while slope(hi) < 0 and hi < 1e300:
        hi *= 2.0
    lo = 0.0 if hi == 1.0 else hi / 2.0
    return brentq(slope, lo, hi, xtol=1e-16 * hi, rtol=1e-15, maxiter=500)


class _Refiner:
    """Iterative refinement for min Σ|r|^p on one of the two subspace forms.

    "range": unknown u ∈ ℝᵏ, r = Bu − c, steps y = BΔ.
    "null":  unknown x ∈ ℝⁿ with Aᵀx fixed, r = x, steps y = Δ with AᵀΔ = 0.
    """

    def __init__(self, form, M, c, p, cfg, rng):
        self.form = form
        self.M = M
        self.c = c
        self.p = p
        self.cfg = cfg
        self.rng = rng
        self.inv = build_inverse_operator(M) if M.n_cols else None
        self.calls = 0

    def residual(self, u):
        return self.M.matvec(u) - self.c if self.form == "range" else u

    def lower_bound(self, r):
        """Fenchel dual value at two fits of the current gradient.

        Any u with Mᵀu = 0 (range form) or u = My (null form) certifies
        OPT ≥ dual(u). The Euclidean fit is cheap; the fit weighted by the
        curvature of φ is the one that becomes tight at the optimum.
        """
        p = self.p
        g = p * np.abs(r) ** (p - 1.0) * np.sign(r)
        if self.inv is None:
            return _scaled_dual(p, float(g @ r), g)
        best = 0.0
        ar = np.abs(r)
        top = float(ar.max()) if ar.size else 0.0
        h = np.maximum(ar, 1e-12 * top) ** (p - 2.0) if top > 0 else np.ones_like(ar)
        dense_ok = self.M.n_rows * self.M.n_cols <= DENSE_FIT_MAX
        if self.form == "range":
            # u = g − W M λ with MᵀWMλ = Mᵀg, so that Mᵀu = 0; then uᵀr = −uᵀc
            fits = [g - self.M.matvec(self.inv.apply(self.M.rmatvec(g)))]
            if dense_ok:
                sw = np.sqrt(h / h.max())
                Md = self.M.to_dense()
                lam = np.linalg.lstsq(sw[:, None] * Md, g / sw, rcond=None)[0]
                fits.append(g - sw * sw * (Md @ lam))
            for u in fits:
                best = max(best, _scaled_dual(p, -float(u @ self.c), u))
            return best
        # null form: dual objective yᵀb − Σφ*(My) at fits y of ∇ ≈ My
        ys = [self.inv.apply(self.M.rmatvec(g))]
        if dense_ok:
            sw = np.sqrt(h.min() / h)
            Md = self.M.to_dense()
            ys.append(np.linalg.lstsq(sw[:, None] * Md, sw * g, rcond=None)[0])
        for y in ys:
            best = max(best, _scaled_dual(p, float(y @ self.c), self.M.matvec(y)))
        return best

    def solver_name(self):
        s = self.cfg.residual_solver
        if s != "auto":
            return s
        if self.cfg.sampled and self.form == "range" and self.p <= 2:
            return "sampled"
        return "mwu" if self.p >= 2 else "newton"

    def _feasible(self, delta):
        """Remove the component of a null-form step that leaves ker Aᵀ."""
        if self.form != "null" or self.inv is None:
            return delta
        return delta - self.M.matvec(self.inv.apply(self.M.rmatvec(delta)))

    def direction(self, r):
        """(best residual step, its residual value, all candidate steps)."""
        p = self.p
        t = np.abs(r)
        g = p * t ** (p - 1.0) * np.sign(r)
        self.calls += 1
        name = self.solver_name()
        if name == "mwu":
            if p < 2:
                raise ContractViolation("the multiplicative-weights residual solver needs p ≥ 2")
            # budgets reaching down to where the model's curvature matches f's
            # (c_p → p − 1), i.e. Newton-like steps near the optimum
            ratio = bregman_constant(p) / (p - 1.0)
            k = self.cfg.newton_candidates
            extra = [ratio ** (j / (k - 1)) for j in range(1, k)] if k > 1 else []
            res = approx_via_z_search(self.M, t, g, p, self.cfg.mwu, self.form, self.cfg.grid_C,
                                      extra_z=extra)
            cands = [self._feasible(c) for c in res.candidates]
            return self._feasible(res.delta), res.value, cands
        if name == "newton":
            c0 = bregman_constant(p)
            k = self.cfg.newton_candidates
            ratio = (p - 1.0) / c0
            out = []
            for j in range(k):
                cj = c0 * ratio ** (j / (k - 1)) if k > 1 else c0
                delta, value = solve_residual_exact(self.M, g, t, p, self.form, c=cj)
                out.append((self._feasible(delta), value))
            return out[0][0], out[0][1], [d for d, _ in out]
        if name == "sampled":
            delta, value = self._sampled_direction(g, t)
            return delta, value, [delta]
        raise ContractViolation(f"unknown residual solver {name!r}")

    def _sampled_direction(self, g, t):
        p = self.p
        if self.form != "range" or p > 2:
            raise ContractViolation("the sampled route covers P1 with p ≤ 2")
        # Σγ_p(t, y) is p-homogeneous in (t, y); the sampler wants t ≥ 1
        top = float(t.max()) if t.size else 0.0
        if top <= 0:
            return np.zeros(self.M.n_cols), 0.0
        tf = np.maximum(t, 1e-12 * top)
        tmin = float(tf.min())
        res = gamma_sample(self.M, tf / tmin, p, rng=self.rng, C_h=self.cfg.C_h)
        S = res.sample
        if len(S) == 0:
            return solve_residual_exact(self.M, g, t, p, self.form)
        sub = self.M.take_rows(S.indices)
        lin = self.M.rmatvec(g)
        delta, _ = solve_residual_exact(sub, g[S.indices], tf[S.indices], p, "range",
                                        weights=S.weights, linear=lin)
        y = self.M.matvec(delta)
        val = float(g @ y) - bregman_constant(p) * kernels.gamma_sum(p, t, y)
        return delta, val

    def run(self, u0, eps, history, trace=None):
        p = self.p
        cfg = self.cfg
        u = np.array(u0, dtype=np.float64)
        r = self.residual(u)
        f = float(np.sum(np.abs(r) ** p))
        lam = lemma_step(p)
        lb = 0.0
        converged = False
        it = 0
        for it in range(cfg.max_outer + 1):
            lb = max(lb, self.lower_bound(r))
            gap = (f - lb) / lb if lb > 0 else math.inf
            entry = {"iter": it, "objective": f, "lower_bound": lb, "gap": gap}
            if gap <= eps or f == 0.0:
                converged = True
                history.append(entry)
                break
            if it == cfg.max_outer or (self.M.n_cols == 0):
                history.append(entry)
                break
            try:
                delta, value, cands = self.direction(r)
            except InfeasibleError:
                history.append(entry)
                break
            y = self.M.matvec(delta) if self.form == "range" else delta
            f_lemma = float(np.sum(np.abs(r - lam * y) ** p))
            s = lam
            f_new = f_lemma
            if cfg.step_rule == "line-search":
                # every candidate direction gets an exact line search; the one
                # maximizing the residual objective is among them, so the
                # winner decreases f at least as much as the lemma step does
                for cand in cands:
                    yc = self.M.matvec(cand) if self.form == "range" else cand
                    sc = _line_search(r, yc, p)
                    fc = float(np.sum(np.abs(r - sc * yc) ** p))
                    if fc < f_new:
                        s, f_new, delta, y = sc, fc, cand, yc
            entry.update({"residual_value": float(value), "step": float(s),
                          "lemma_objective": f_lemma})
            history.append(entry)
            if trace is not None:
                trace(dict(entry))
            if not f_new < f:
                break
            u = u - s * delta
            # recompute rather than accumulate, so feasibility does not drift
            r = self.residual(u) if self.form == "range" else u
            f = float(np.sum(np.abs(r) ** p))
        return u, f, lb, converged, it


def _report(prob, x, lb, converged, iters, calls, t0, cfg, route, history):
    f = prob.objective(x)
    gap = (f - lb) / lb if lb > 0 else (0.0 if f == 0 else math.inf)
    return SolveReport(np.asarray(x, dtype=np.float64), f, lb, max(gap, 0.0), iters, calls,
                       time.perf_counter() - t0, cfg.seed, cfg.method, route, converged,
                       prob.p, prob.form, prob.n, prob.d, prob.A.nnz,
                       prob.constraint_residual(x), history)


def _solve_p1_residual(prob, eps, cfg, rng, x0=None, route="residual"):
    t0 = time.perf_counter()
    N, xp = _reduce_constraints(prob)
    if N is None:
        M, c = prob.A, prob.b
        lift = lambda u: u  # noqa: E731
        to_u = lambda x: x  # noqa: E731
    else:
        M = SparseMatrix.from_dense(prob.A.matmat(N)) if N.shape[1] else \
            SparseMatrix.from_dense(np.zeros((prob.n, 0)))
        c = prob.b - prob.A.matvec(xp)
        lift = lambda u: xp + N @ u  # noqa: E731
        to_u = lambda x: N.T @ (x - xp)  # noqa: E731
    if M.n_cols == 0:
        return _report(prob, lift(np.zeros(0)), prob.objective(lift(np.zeros(0))), True, 0, 0,
                       t0, cfg, route + ":fixed", [])
    u0 = linear_regression(M, c, rng, tol=cfg.lsq_tol, spectral_c=cfg.spectral_c) \
        if x0 is None else to_u(x0)
    ref = _Refiner("range", M, c, prob.p, cfg, rng)
    history = []
    if prob.p == 2:
        u, lb = u0, ref.lower_bound(ref.residual(u0))
        history.append({"iter": 0, "objective": prob.objective(lift(u)), "lower_bound": lb})
        return _report(prob, lift(u), lb, True, 0, 0, t0, cfg, "least-squares", history)
    u, f, lb, conv, it = ref.run(u0, eps, history, cfg.trace)
    name = ref.solver_name()
    return _report(prob, lift(u), lb, conv, it, ref.calls, t0, cfg, f"{route}:{name}", history)


def _solve_p2_primal(prob, eps, cfg, rng, x0=None, route="residual"):
    t0 = time.perf_counter()
    if np.linalg.norm(prob.b) == 0:
        return _report(prob, np.zeros(prob.n), 0.0, True, 0, 0, t0, cfg, "trivial", [])
    x_ls = initial_point(prob, rng, cfg.lsq_tol)
    if x0 is None:
        x0 = x_ls
    else:
        # least-squares correction back onto Aᵀx = b
        inv = build_inverse_operator(prob.A)
        x0 = x0 - prob.A.matvec(inv.apply(prob.A.rmatvec(x0) - prob.b))
    ref = _Refiner("null", prob.A, prob.b, prob.p, cfg, rng)
    history = []
    if prob.p == 2:
        lb = ref.lower_bound(x_ls)
        history.append({"iter": 0, "objective": prob.objective(x_ls), "lower_bound": lb})
        return _report(prob, x_ls, lb, True, 0, 0, t0, cfg, "least-squares", history)
    x, f, lb, conv, it = ref.run(x0, eps, history, cfg.trace)
    name = ref.solver_name()
    return _report(prob, x, lb, conv, it, ref.calls, t0, cfg, f"{route}:{name}", history)


# public solvers ------------------------------------------------------------------


def solve_p1(prob, eps=1e-8, config=None):
    """Iterative refinement for P1.

    Each outer step solves the residual problem at the current point
    approximately (multiplicative weights for p ≥ 2, Newton on the residual
    model otherwise, or Newton on a γ-preserving row sample when
    ``config.sampled``) and moves along the result with a step no worse than
    the guaranteed one.
    """
    cfg = config or SolveConfig()
    if prob.form != "p1":
        raise ContractViolation("solve_p1 needs a P1 problem")
    rng = as_rng(cfg.seed)
    route = "sampled" if cfg.sampled else "residual"
    return _solve_p1_residual(prob, eps, cfg, rng, route=route)


def dual_problem(prob):
    """The P1 problem min ‖Ay‖_q subject to bᵀy = 1, q = p/(p − 1), with the
    single constraint row embedded in a d×d matrix."""
    d = prob.d
    C = np.zeros((d, d))
    C[0] = prob.b
    v = np.zeros(d)
    v[0] = 1.0
    q = prob.p / (prob.p - 1.0)
    return RegressionProblem(prob.A, np.zeros(prob.n), C, v, q, "p1")


def recover_primal(prob, y):
    """Gradient map x ∝ |Ay|^{q−2}Ay, scaled to fit Aᵀx = b and then
    projected onto it by a least-squares correction."""
    q = prob.p / (prob.p - 1.0)
    Ay = prob.A.matvec(y)
    u = np.abs(Ay) ** (q - 1.0) * np.sign(Ay)
    Atu = prob.A.rmatvec(u)
    denom = float(Atu @ Atu)
    if denom == 0:
        raise InfeasibleError("degenerate dual solution")
    x = u * float(Atu @ prob.b) / denom
    inv = build_inverse_operator(prob.A)
    return x - prob.A.matvec(inv.apply(prob.A.rmatvec(x) - prob.b))


def solve_p2(prob, eps=1e-8, config=None):
    """P2 through its dual: solve min_{bᵀy=1}‖Ay‖_q with ``solve_p1``, map back
    by the gradient map, then refine the recovered point on {Aᵀx = b} until
    the certified gap is below ``eps``.

    With ``config.method == "residual"`` the dual stage is skipped.
    """
    cfg = config or SolveConfig()
    if prob.form != "p2":
        raise ContractViolation("solve_p2 needs a P2 problem")
    rng = as_rng(cfg.seed)
    if np.linalg.norm(prob.b) == 0 or prob.p == 2 or cfg.method == "residual":
        return _solve_p2_primal(prob, eps, cfg, rng)
    t0 = time.perf_counter()
    dual = dual_problem(prob)
    dcfg = SolveConfig(**{**cfg.__dict__, "trace": None, "sampled": cfg.sampled and dual.p <= 2,
                          "residual_solver": "auto", "max_outer": cfg.dual_max_outer})
    # the dual only has to supply a warm start: the primal stage certifies
    drep = _solve_p1_residual(dual, max(eps, cfg.dual_eps), dcfg, rng, route="dual")
    x0 = recover_primal(prob, drep.x)
    rep = _solve_p2_primal(prob, eps, cfg, rng, x0=x0, route="dual+refine")
    rep.residual_calls += drep.residual_calls
    rep.iterations += drep.iterations
    rep.wall_time = time.perf_counter() - t0
    rep.history = [{"stage": "dual", **h} for h in drep.history] + \
        [{"stage": "primal", **h} for h in rep.history]
    return rep


def solve(prob, eps=1e-8, config=None):
    """Dispatch on form and method."""
    cfg = config or SolveConfig()
    if cfg.method == "homotopy":
        return homotopy_solve(prob, eps, cfg)
    if prob.form == "p1":
        return solve_p1(prob, eps, cfg)
    return solve_p2(prob, eps, cfg)


# combined sampler for the smoothed q-norm ------------------------------------------


def sample_smoothed_qnorm(A, t, q, rng=None, c=None, oversample=1.0):
    """Row sample preserving ‖Ty‖₂² + ‖y‖_q^q for y = Ax, T = diag(t^{(q−2)/2}).

    Row i is kept with π_i = min{1, c·log d·max{τ_i(TA), ℓ_i}} where ℓ are the
    ℓ_q Lewis weights of A, and kept rows carry weight 1/π_i on both terms.
    """
    if q < 2:
        raise ContractViolation("the combined sampler needs q ≥ 2")
    n, d = A.shape
    t = np.asarray(t, dtype=np.float64)
    if t.shape != (n,) or np.any(t < 0):
        raise ContractViolation("t must be a nonnegative vector with one entry per row")
    rng = as_rng(rng)
    scale = t ** ((q - 2.0) / 2.0) if q > 2 else np.ones(n)
    if np.any(scale > 0):
        TA = A.scale_rows(scale)
        tau = leverage_scores_exact(TA).values
    else:
        tau = np.zeros(n)
    lew = lewis_weights(A, q).weights
    imp = np.maximum(tau, lew)
    c = (4.0 * d ** max(q / 2.0 - 1.0, 0.0)) if c is None else c
    S = sample_rows(imp, oversample, c, rng, d)
    # sample_rows rescales by 1/√π (for quadratic forms); report 1/π weights
    S = RowSample(S.indices, 1.0 / S.probabilities, S.probabilities, n, kind="smoothed",
                  meta={"q": q, "c": c})
    return S


def smoothed_qnorm(t, y, q, weights=None):
    """Σ w_i(t_i^{q−2}y_i² + |y_i|^q)."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, float)
    return float(np.sum(w * (t ** (q - 2.0) * y * y + np.abs(y) ** q)))


# homotopy ----------------------------------------------------------------------------


def d_weight_matrix(p, x, A, b, t_k, gamma):
    """D_ii = ((p−1)/2)·max{t_k^{p/2}, |(Ax−b)_i|^{p/2} − sign(p−2)γ}^{2−4/p}."""
    if not t_k > 0:
        raise ContractViolation("t_k must be positive")
    r = A.matvec(x) - b
    inner = np.maximum(t_k ** (p / 2.0), np.abs(r) ** (p / 2.0) - np.sign(p - 2.0) * gamma)
    return (p - 1.0) / 2.0 * inner ** (2.0 - 4.0 / p)


def homotopy_gamma(p, n, t):
    return (1.0 + p * p / (2.0 * (p - 1.0)) * math.sqrt(n)) * t ** (p / 2.0)


def clamp_box(r, p, gamma):
    """Box for the next phase: |s|^{p/2} within γ of |r|^{p/2}.

    When |r|^{p/2} − γ ≤ 0 the box is symmetric [−u, u]; otherwise it is the
    sign(r) side [l, u].
    """
    m = np.abs(r) ** (p / 2.0)
    hi = (m + gamma) ** (2.0 / p)
    low = np.clip(m - gamma, 0.0, None) ** (2.0 / p)
    sym = m - gamma <= 0
    sgn = np.where(r >= 0, 1.0, -1.0)
    lo = np.where(sym, -hi, np.where(sgn > 0, low, -hi))
    up = np.where(sym, hi, np.where(sgn > 0, hi, -low))
    return lo, up


def homotopy_solve(prob, eps=1e-6, config=None):
    """Phased homotopy in the smoothing threshold t for P1 without constraints.

    Each phase fixes a clamp box around the current residual, builds the
    diagonal D and a spectral approximation of √D·A, and minimizes the sum
    of quadratic extensions of γ_p(t_{k+1}, ·) over the box by gradient
    descent preconditioned with (ÃᵀÃ)⁻¹ and Armijo backtracking.
    """
    cfg = config or SolveConfig(method="homotopy")
    if prob.form != "p1" or prob.C is not None:
        raise ContractViolation("homotopy_solve handles unconstrained P1")
    t0_wall = time.perf_counter()
    rng = as_rng(cfg.seed)
    A, b, p = prob.A, prob.b, prob.p
    n, d = A.shape
    bnorm = float(np.linalg.norm(b))
    history = []
    if bnorm == 0:
        return _report(prob, np.zeros(d), 0.0, True, 0, 0, t0_wall, cfg, "homotopy:trivial", [])
    x = linear_regression(A, b, rng, tol=cfg.lsq_tol, spectral_c=cfg.spectral_c)
    t = 2.0 * bnorm
    shrink = 1.0 - 1.0 / (2.0 * p)
    # phases until n·t^p drops below eps
    phases = max(1, int(math.ceil(math.log(max(n * t**p / eps, 1.0)) / (-p * math.log(shrink)))))
    if p == 2:
        phases = 0
    ref = _Refiner("range", A, b, p, cfg, rng)
    total_inner = 0
    for k in range(phases):
        t_next = shrink * t
        gam = homotopy_gamma(p, n, t)
        r = A.matvec(x) - b
        lo, hi = clamp_box(r, p, gam)
        D = d_weight_matrix(p, x, A, b, t, gam)
        SDA = A.scale_rows(np.sqrt(D))
        if n > 2 * cfg.spectral_c * d * math.log(max(d, 2)):
            At = spectral_approximation(SDA, rng, SpectralConfig(c=cfg.spectral_c)).At
        else:
            At = SDA
        try:
            pre = build_inverse_operator(At)
        except RankDeficientError:
            pre = build_inverse_operator(SDA)

        def phase_obj(xx):
            val, der = quadratic_extension(p, t_next, lo, hi, A.matvec(xx) - b)
            return float(np.sum(val)), A.rmatvec(der)

        f, grad = phase_obj(x)
        f_start = f
        step = 1.0 / p
        for inner in range(cfg.homotopy_phase_iters):
            direction = pre.apply(grad)
            slope = float(grad @ direction)
            if slope <= 1e-15 * max(abs(f), 1e-300):
                break
            accepted = False
            for _ in range(60):
                x_try = x - step * direction
                f_try, g_try = phase_obj(x_try)
                if f_try <= f - 1e-4 * step * slope:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
            rel = (f - f_try) / max(abs(f), 1e-300)
            x, f, grad = x_try, f_try, g_try
            step *= 2.0
            total_inner += 1
            if rel < 1e-13:
                break
        history.append({"phase": k, "t": t_next, "objective": prob.objective(x),
                        "phase_start": f_start, "phase_end": f})
        if cfg.trace is not None:
            cfg.trace(dict(history[-1]))
        t = t_next
    lb = ref.lower_bound(ref.residual(x))
    f = prob.objective(x)
    converged = f - lb <= eps + 1e-12 * f
    return _report(prob, x, lb, converged, phases, total_inner, t0_wall, cfg, "homotopy",
                   history)
