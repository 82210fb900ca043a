"""Invariant and acceptance checks shared by ``pnormreg verify`` and the test suite.

Every check runs in one of two modes. "full" uses the acceptance sizes and
thresholds; "quick" shrinks the instance counts so the unit tests stay fast.
Checks never raise: an exception inside a check is reported as a failure
with its message, which is what makes a corrupted knob fail loudly.
"""

from __future__ import annotations

import contextlib
import io
import json
import math
import os
import tempfile
import time
import traceback
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import generators, kernels
from .gamma import (DEFAULT_C_H, bregman_bounds, gamma_derivative, gamma_preservation_report,
                    gamma_sample, homogeneity_pair, perturbation_bound, quadratic_extension,
                    scaling_bounds, sum_lower_bound, two_sided_bounds)
from .leverage import SpectralConfig, spectral_approximation, spectral_bounds
from .linsolve import DEFAULT_TOL_DENSE, MaintainedInverse, richardson_solve
from .oracle import kkt_solve, pnorm_oracle
from .pnorm import SolveConfig, solve
from .residual import (MWUConfig, ResidualProblem, lemma_step, normalize_thresholds,
                       quadratic_model_z, residual_gradient, solve_residual, solve_weighted_lr)
from .sparse import SeededRng, SparseMatrix, write_matrix_market, write_vector

MODES = ("quick", "full")
SLACK = 1e-9


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float
    budget: float
    metrics: dict = field(default_factory=dict)

    @property
    def status(self):
        return "PASS" if self.passed else "FAIL"

    def line(self):
        return f"[{self.status}] {self.name:<12} {self.seconds:7.2f}s  {self.detail}"

    def to_json(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail,
                "seconds": self.seconds, "budget": self.budget, "metrics": self.metrics}


@dataclass
class Knobs:
    """Constants a user may override when running the verifier."""

    C_h: float = DEFAULT_C_H
    C: float = 1.0
    c: float = 30.0
    m_knob: float = 1.0
    rebuild_period: float | None = None
    seed: int = 0


def _rel_violation(lhs, rhs, *scales):
    """max over draws of (lhs − rhs)/scale for a predicate lhs ≤ rhs."""
    scale = np.maximum.reduce([np.abs(s) for s in (lhs, rhs) + scales])
    scale = np.where(scale > 0, scale, 1.0)
    return float(np.max((lhs - rhs) / scale, initial=-np.inf))


# 1. γ predicates -----------------------------------------------------------------


def _p_groups(rng, draws, lo, hi, groups=100):
    """Split ``draws`` over ``groups`` exponents drawn uniformly on [lo, hi]."""
    ps = rng.uniform(lo, hi, groups)
    per = draws // groups
    return [(float(p), per) for p in ps]


def check_gamma(mode, knobs):
    rng = np.random.default_rng(knobs.seed)
    draws = 100_000 if mode == "full" else 10_000
    worst = {}

    def record(name, v):
        worst[name] = max(worst.get(name, -np.inf), v)

    def logu(size, lo, hi):
        return 10.0 ** rng.uniform(lo, hi, size)

    def signed(size, lo, hi):
        return logu(size, lo, hi) * rng.choice([-1.0, 1.0], size)

    for p, m in _p_groups(rng, draws, 1.05, 8.0):
        t, y = signed(m, -3, 3), signed(m, -3, 3)
        lo, mid, hi = bregman_bounds(p, t, y)
        scale = np.abs(t) ** p + np.abs(p * np.abs(t) ** (p - 1) * y)
        record("bregman", max(_rel_violation(lo, mid, scale), _rel_violation(mid, hi, scale)))

        lam = logu(m, -3, 3)
        lo, mid, hi = scaling_bounds(p, t, y, lam)
        record("scaling", max(_rel_violation(lo, mid), _rel_violation(mid, hi)))

        tt, r = logu(m, -3, 3), logu(m, -3, 3)
        lhs, rhs = homogeneity_pair(p, tt, y, r)
        record("homogeneity", float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(lhs), 1e-300))))

        # branch agreement of γ and γ' at |x| = t, and of the quadratic extension
        for side in (-1.0, 1.0):
            below, above = tt * (1 - 1e-13), tt * (1 + 1e-13)
            gb = kernels.gamma_values(p, tt, side * below)
            ga = kernels.gamma_values(p, tt, side * above)
            record("continuity", float(np.max(np.abs(ga - gb) / ga)))
            db = gamma_derivative(p, tt, side * below)
            da = gamma_derivative(p, tt, side * above)
            record("continuity", float(np.max(np.abs(da - db) / np.abs(da))))
        lo_b, hi_b = -logu(m, -2, 1), logu(m, -2, 1)
        for edge in (lo_b, hi_b):
            inside = quadratic_extension(p, tt, lo_b, hi_b, edge)
            outside = quadratic_extension(p, tt, lo_b, hi_b, edge * (1 + 1e-13))
            exact = kernels.gamma_values(p, tt, edge)
            record("continuity", float(np.max(np.abs(inside[0] - exact) / exact)))
            record("continuity", float(np.max(np.abs(outside[0] - exact) / exact)))
            record("continuity", float(np.max(np.abs(outside[1] - inside[1])
                                              / np.maximum(np.abs(inside[1]), 1e-300))))

    for q, m in _p_groups(rng, draws, 2.0, 8.0):
        t, y = logu(m, -3, 3), signed(m, -3, 3)
        lo, mid, hi = two_sided_bounds(q, t, y)
        record("two_sided", max(_rel_violation(lo, mid), _rel_violation(mid, hi)))

    n = 8
    for q, m in _p_groups(rng, draws, 1.01, 2.0):
        t = logu((m, n), 0, 3)
        y = logu((m, n), -4, 2)
        yt = np.abs(y + logu((m, n), -6, 1) * rng.choice([-1.0, 1.0], (m, n)))
        diff, bound = perturbation_bound(q, t, y, yt)
        record("perturbation", _rel_violation(diff, bound))
        beta = t.max(axis=1) * 10.0 ** rng.uniform(0, 1, m)
        total, bound = sum_lower_bound(q, t, signed((m, n), -4, 2), beta)
        record("lower_bound", _rel_violation(bound, total))

    tol = {"continuity": 1e-9}
    bad = {k: v for k, v in worst.items() if v > tol.get(k, SLACK)}
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    return not bad, f"{draws} draws per predicate; worst relative violation {detail}", worst


# 2. sampling preservation --------------------------------------------------------


def check_sampling(mode, knobs):
    count, n, trials = (20, 4096, 500) if mode == "full" else (2, 4096, 200)
    d = 8
    qs = (1.25, 1.5, 1.75, 2.0)
    rates, supports, p99 = [], [], []
    for k in range(count):
        kind = "heavy" if k % 2 else "gaussian"
        A = generators.design_matrix(kind, n, d, seed=knobs.seed + k)
        t = generators.log_uniform_thresholds(n, 3.0, seed=knobs.seed + 500 + k)
        q = qs[k % len(qs)]
        res = gamma_sample(A, t, q, C_h=knobs.C_h, rng=SeededRng(knobs.seed + k))
        rep = gamma_preservation_report(A, t, q, res, trials, SeededRng(knobs.seed + 1000 + k))
        rates.append(1.0 - rep["fail_rate_075"])
        supports.append(len(res.sample))
        p99.append(rep["p99"])
    ok = min(rates) >= 0.99 and max(supports) <= n / 4
    detail = (f"{count} instances n={n}: min pass rate {min(rates):.3f} (need 0.99), "
              f"max support {max(supports)} (limit {n // 4}), worst p99 deviation {max(p99):.3f}")
    return ok, detail, {"pass_rates": rates, "supports": supports, "p99": p99}


# 3. spectral approximation ---------------------------------------------------------


def check_spectral(mode, knobs):
    count, n, d = (50, 2000, 50) if mode == "full" else (5, 500, 10)
    need = count - 2 * count // 50
    good, rows, lows, highs = 0, [], [], []
    row_cap = 20 * d * math.log(d)
    for k in range(count):
        A = generators.random_sparse(n, d, 0.05, seed=knobs.seed + k)
        res = spectral_approximation(A, SeededRng(knobs.seed + k), SpectralConfig(c=knobs.c))
        lo, hi = spectral_bounds(A, res.At)
        lows.append(lo)
        highs.append(hi)
        rows.append(res.At.n_rows)
        good += 0.25 <= lo and hi <= 1 + 1e-6 and res.At.n_rows <= row_cap
    detail = (f"{good}/{count} within [1/4, 1+1e-6] (need {need}); "
              f"μ range [{min(lows):.3f}, {max(highs):.6f}], max rows {max(rows)} "
              f"(cap {row_cap:.0f})")
    return good >= need, detail, {"mu_min": lows, "mu_max": highs, "rows": rows}


# 4. closed-form weighted regression -----------------------------------------------------


def check_closed_form(mode, knobs):
    count = 100 if mode == "full" else 20
    rng = np.random.default_rng(knobs.seed)
    worst = {"objective": 0.0, "budget": 0.0, "subspace": 0.0}
    for k in range(count):
        n = int(rng.integers(10, 80))
        d = int(rng.integers(1, max(2, n // 3)))
        A = generators.design_matrix("sparse" if k % 3 == 0 else "gaussian", n, d,
                                     seed=rng, density=0.3)
        R = 10.0 ** rng.uniform(-2, 2, n)
        g = rng.standard_normal(n)
        z = float(rng.uniform(0.1, 10.0))
        # half the instances go through the preconditioned Richardson path
        inv = MaintainedInverse.build(A, rng.uniform(1.0, 2.0, n) / R) if k % 2 else None
        delta = solve_weighted_lr(A, R, g, z, inv=inv, lam=2.0 if inv else 1.0)
        ref = kkt_solve(R, A.to_dense(), g, z)
        obj, ref_obj = float(delta @ (R * delta)), float(ref.x @ (R * ref.x))
        worst["objective"] = max(worst["objective"], abs(obj - ref_obj) / ref_obj)
        worst["budget"] = max(worst["budget"], abs(g @ delta - z) / max(z, 1.0))
        scale = max(np.linalg.norm(A.to_dense(), 2) * np.linalg.norm(delta), 1e-300)
        worst["subspace"] = max(worst["subspace"],
                                float(np.max(np.abs(A.rmatvec(delta)))) / scale)
    ok = all(v <= 1e-9 for v in worst.values())
    detail = f"{count} instances; worst " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    return ok, detail, worst


# 5. residual contraction ---------------------------------------------------------------


def _mwu(knobs):
    return MWUConfig(C=knobs.C, m_knob=knobs.m_knob, rebuild_period=knobs.rebuild_period)


def check_contraction(mode, knobs):
    ps = (2.5, 4.0, 8.0)
    forms = ("p1", "p2") if mode == "full" else ("p1",)
    n, d = (256, 8) if mode == "full" else (128, 8)
    out, ok = {}, True
    for p in ps:
        bound = 1.0 - lemma_step(p) / 2.0 + 0.05
        for form in forms:
            prob = generators.regression_instance(n, d, p, form, seed=knobs.seed + int(p * 10))
            ref = pnorm_oracle(prob.A, prob.b, p=p, form=form)
            cfg = SolveConfig(method="residual", residual_solver="mwu", mwu=_mwu(knobs),
                              seed=knobs.seed)
            rep = solve(prob, 1e-10, cfg)
            gaps = np.array([h["objective"] for h in rep.history]) - ref.value
            # ratios stop once the gap reaches the oracle's own accuracy
            floor = 1e-11 * ref.value
            ratios = [max(g1, 0.0) / g0 for g0, g1 in zip(gaps[:-1], gaps[1:]) if g0 > floor]
            avg = float(np.mean(ratios)) if ratios else 0.0
            out[f"p={p:g}/{form}"] = {"average_ratio": avg, "bound": bound, "steps": len(ratios)}
            ok &= avg <= bound
    detail = "; ".join(f"{k}: {v['average_ratio']:.3f} ≤ {v['bound']:.3f}" for k, v in out.items())
    return ok, "average gap ratio " + detail, out


# 6. end-to-end optimality ----------------------------------------------------------------


E2E_PS = (1.25, 1.5, 1.75, 2.0, 3.0, 4.0, 8.0)
E2E_SIZES = ((128, 8, "gaussian"), (256, 16, "heavy"), (384, 24, "sparse"),
             (512, 32, "gaussian"), (512, 32, "sparse"))


def check_end_to_end(mode, knobs):
    if mode == "full":
        ps, sizes = E2E_PS, E2E_SIZES
    else:
        ps, sizes = (1.5, 3.0), ((96, 6, "gaussian"),)
    worst_obj, worst_cons, failures, skipped, runs = -np.inf, 0.0, [], 0, 0
    for s, (n, d, kind) in enumerate(sizes):
        for p in ps:
            for form in ("p1", "p2"):
                seed = knobs.seed + 100 * s + int(p * 8)
                cons = 2 if (form == "p1" and s % 2) else 0
                prob = generators.regression_instance(n, d, p, form, kind, seed, cons)
                ref = pnorm_oracle(prob.A, prob.b, prob.C, prob.v, p=p, form=form)
                if ref.flagged:
                    skipped += 1
                    continue
                cfg = SolveConfig(seed=seed, mwu=_mwu(knobs), spectral_c=knobs.c, C_h=knobs.C_h)
                rep = solve(prob, 1e-7, cfg)
                runs += 1
                rel = (rep.objective - ref.value) / ref.value
                worst_obj = max(worst_obj, rel)
                worst_cons = max(worst_cons, rep.constraint_residual)
                if rel > 1e-6 or rep.constraint_residual > 1e-8:
                    failures.append(f"p={p:g} {form} n={n} d={d}")
    ok = not failures and runs > 0
    detail = (f"{runs} solves ({skipped} oracle-flagged skipped); worst objective excess "
              f"{worst_obj:.1e} (limit 1e-6), worst constraint {worst_cons:.1e} (limit 1e-8)")
    if failures:
        detail += "; failing: " + ", ".join(failures[:5])
    return ok, detail, {"worst_objective": worst_obj, "worst_constraint": worst_cons,
                        "skipped": skipped, "failures": failures}


# 7. inverse maintenance --------------------------------------------------------------------


def check_inverse(mode, knobs):
    n, d, p = 256, 20, 4.0
    seeds = range(3) if mode == "full" else range(1)
    eps_op = DEFAULT_TOL_DENSE
    worst_err, worst_drift, updates, iters = 0.0, 0.0, 0, []
    for s in seeds:
        for form in ("range", "null"):
            for mult, period in ((1.0, None), (30.0, math.inf)):
                rng = np.random.default_rng(knobs.seed + s)
                A = generators.design_matrix("gaussian", n, d, rng)
                if form == "null":
                    xs = rng.standard_normal(n)
                else:
                    xs = A.matvec(rng.standard_normal(d)) - rng.standard_normal(n)
                g = residual_gradient(p, xs)
                tn, M = normalize_thresholds(np.abs(xs), p)
                z = mult * quadratic_model_z(A, g, np.abs(xs), p, form) / M
                prob = ResidualProblem(A, g, tn, z, p, form)
                errs = []

                def trace(ev):
                    inv = ev["inverse"]
                    L = np.linalg.cholesky(A.gram(inv.reference_weights))
                    E = L.T @ inv.dense() @ L - np.eye(d)
                    errs.append(float(np.linalg.norm(E, 2)))

                # C is chosen so that T ≥ 100 and the trace is not cut short
                cfg = MWUConfig(C=0.03, max_iter=100, rebuild_period=period or knobs.rebuild_period,
                                m_knob=knobs.m_knob)
                sol = solve_residual(prob, cfg, trace)
                iters.append(sol.iterations)
                updates += sum(sol.update_ranks)
                worst_err = max(worst_err, max(errs))
                worst_drift = max(worst_drift, sol.max_drift)
    ok = worst_err <= 10 * eps_op and worst_drift <= 4.0 and min(iters) >= 100
    detail = (f"{len(iters)} traces of {min(iters)} iterations, {updates} SMW row updates; "
              f"max ‖L'(Y+Q)L − I‖ {worst_err:.1e} (limit {10 * eps_op:.0e}), "
              f"max per-level drift {worst_drift:.2f} (limit 4)")
    return ok, detail, {"error": worst_err, "drift": worst_drift, "iterations": iters}


# 8. Richardson ---------------------------------------------------------------------------------


def check_richardson(mode, knobs):
    rng = np.random.default_rng(knobs.seed)
    count = 20 if mode == "full" else 5
    worst = {}
    for lam in (1.5, 2.0, 3.0):
        ratio = 0.0
        for _ in range(count):
            n, d = int(rng.integers(30, 120)), int(rng.integers(3, 20))
            A = generators.design_matrix("gaussian", n, d, rng)
            G = A.gram()
            Gh = sla.sqrtm(G).real
            # Z⁻¹ = G^{1/2} V diag(μ) Vᵀ G^{1/2}, μ ∈ [1/λ, 1] with both ends hit
            V = np.linalg.qr(rng.standard_normal((d, d)))[0]
            mu = rng.uniform(1.0 / lam, 1.0, d)
            mu[0], mu[-1] = 1.0 / lam, 1.0
            Zinv = Gh @ (V * mu) @ V.T @ Gh
            Z = np.linalg.inv(Zinv)
            x_star = rng.standard_normal(d)
            rhs = G @ x_star
            errs = []

            def energy(x):
                e = x - x_star
                errs.append(math.sqrt(float(e @ G @ e)))

            energy(np.zeros(d))
            richardson_solve(A, None, Z, lam=lam, tol=0.0, max_iter=25, rhs=rhs,
                             callback=energy, raise_on_fail=False)
            errs = np.array(errs)
            live = errs[:-1] > 1e-12 * errs[0]
            ratio = max(ratio, float(np.max(errs[1:][live] / errs[:-1][live])))
        worst[lam] = ratio
    ok = all(r <= 1 - 1 / lam + 0.01 for lam, r in worst.items())
    detail = "; ".join(f"λ={lam:g}: {r:.4f} ≤ {1 - 1 / lam + 0.01:.4f}" for lam, r in worst.items())
    return ok, f"{count} systems per λ, worst per-step energy ratio " + detail, worst


# 9. scaling -------------------------------------------------------------------------------------


def _richardson_setup(A, seed=0):
    rng = np.random.default_rng(seed)
    inv = MaintainedInverse.build(A, np.ones(A.n_rows))
    return A, inv, A.rmatvec(rng.standard_normal(A.n_rows))


def _time_iterations(setup, iters):
    A, inv, rhs = setup
    t0 = time.perf_counter()
    richardson_solve(A, None, inv, lam=2.0, tol=0.0, max_iter=iters, rhs=rhs,
                     weights=np.ones(A.n_rows), raise_on_fail=False)
    return (time.perf_counter() - t0) / iters


def per_iteration_time(A, iters=20, repeats=5, seed=0):
    """Best-of-``repeats`` seconds per preconditioned Richardson iteration on AᵀA."""
    setup = _richardson_setup(A, seed)
    return min(_time_iterations(setup, iters) for _ in range(repeats))


def nnz_sweep(n, d, per_row, seed=0, iters=10, rounds=9):
    """(nnz, seconds per iteration) for k nonzeros per row, k in ``per_row``.

    Sizes are timed round-robin and each keeps its best round, so a burst of
    machine noise lands on every size instead of skewing one ratio.
    """
    setups = [_richardson_setup(generators.random_rows_per_row(n, d, k, seed=seed + k), seed)
              for k in per_row]
    best = [math.inf] * len(setups)
    for _ in range(rounds):
        for j, setup in enumerate(setups):
            best[j] = min(best[j], _time_iterations(setup, iters))
    return [(s[0].nnz, t) for s, t in zip(setups, best)]


def check_scaling(mode, knobs):
    # n = 20000 keeps the whole sweep in one memory regime on typical hosts;
    # larger n let the biggest matrix fall out of cache and time the memory
    # hierarchy rather than the O(nnz) iteration
    n, d = (20_000, 64) if mode == "full" else (8_000, 32)
    points = nnz_sweep(n, d, (4, 8, 16, 32), seed=knobs.seed)
    ratios = [b[1] / a[1] for a, b in zip(points[:-1], points[1:])]
    ok = max(ratios) <= 2.5
    detail = (f"n={n} d={d} nnz {points[0][0]}→{points[-1][0]}; per-iteration time ratios "
              + ", ".join(f"{r:.2f}" for r in ratios) + " (limit 2.5)")
    return ok, detail, {"points": points, "ratios": ratios}


# 10. determinism ------------------------------------------------------------------------------


TIMING_FIELDS = ("wall_time", "seconds", "timestamp")


def strip_timing(obj):
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_FIELDS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def check_determinism(mode, knobs):
    from . import cli

    reports = []
    cases = (("p1", 3.0, "dual-auto"), ("p2", 1.5, "dual-auto"), ("p1", 1.5, "residual"))
    if mode == "quick":
        cases = cases[:1]
    with tempfile.TemporaryDirectory() as tmp:
        for form, p, method in cases:
            prob = generators.regression_instance(300, 6, p, form, "sparse", knobs.seed)
            a_path, b_path = os.path.join(tmp, "A.mtx"), os.path.join(tmp, "b.txt")
            write_matrix_market(prob.A, a_path)
            write_vector(prob.b, b_path)
            argv = ["solve", "--A", a_path, "--b", b_path, "--p", str(p), "--form", form,
                    "--method", method, "--seed", str(knobs.seed), "--eps", "1e-8"]
            if method == "residual":
                argv += ["--sampled", "true"]
            outs = []
            for _ in range(2):
                buf = io.StringIO()
                with contextlib.redirect_stdout(buf):
                    code = cli.main(argv)
                if code != 0:
                    return False, f"solve exited with {code} for {form} p={p}", {}
                outs.append(json.dumps(strip_timing(json.loads(buf.getvalue())), sort_keys=True))
            reports.append(outs[0] == outs[1])
    ok = all(reports)
    return ok, f"{sum(reports)}/{len(reports)} repeated solves identical apart from timing", {}


# registry ----------------------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    func: object
    budget: float
    summary: str


CHECKS = (
    Check("gamma", check_gamma, 30.0, "γ sandwich, scaling, homogeneity, C¹ and sum bounds"),
    Check("sampling", check_sampling, 300.0, "γ-sampler preserves Σγ_q within 3/4"),
    Check("spectral", check_spectral, 120.0, "leverage-refined sample is a 4-spectral approximation"),
    Check("closed-form", check_closed_form, 10.0, "weighted regression closed form vs KKT"),
    Check("contraction", check_contraction, 120.0, "outer-step gap contraction"),
    Check("end-to-end", check_end_to_end, 600.0, "solver vs brute-force oracle"),
    Check("inverse", check_inverse, 60.0, "maintained Y + Q vs fresh inverse"),
    Check("richardson", check_richardson, 30.0, "preconditioned Richardson contraction"),
    Check("scaling", check_scaling, 60.0, "per-iteration time vs nnz"),
    Check("determinism", check_determinism, 60.0, "repeated CLI solves are identical"),
)
BY_NAME = {c.name: c for c in CHECKS}


def select(only=None):
    if not only:
        return list(CHECKS)
    names = [s.strip() for part in only for s in str(part).split(",") if s.strip()]
    unknown = [s for s in names if s not in BY_NAME]
    if unknown:
        raise KeyError(f"unknown check(s) {unknown}; available: {sorted(BY_NAME)}")
    return [BY_NAME[s] for s in names]


def run_check(check, mode="full", knobs=None):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    knobs = knobs or Knobs()
    t0 = time.perf_counter()
    try:
        passed, detail, metrics = check.func(mode, knobs)
    except Exception as exc:  # noqa: BLE001 - a crashing check is a failing check
        passed, detail = False, f"error: {type(exc).__name__}: {exc}"
        metrics = {"traceback": traceback.format_exc()}
    seconds = time.perf_counter() - t0
    if mode == "full" and seconds > check.budget:
        passed = False
        detail += f"; over runtime budget ({seconds:.1f}s > {check.budget:.0f}s)"
    return CheckResult(check.name, bool(passed), detail, seconds, check.budget, metrics)


def run_checks(only=None, mode="full", knobs=None, on_result=None):
    results = []
    for check in select(only):
        res = run_check(check, mode, knobs)
        if on_result is not None:
            on_result(res)
        results.append(res)
    return results
