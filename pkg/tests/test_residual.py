import math

import numpy as np
import pytest
import scipy.linalg as sla
from scipy.optimize import minimize

from conftest import dense_sparse
from pnormreg.errors import ContractViolation, InfeasibleError
from pnormreg.gamma import gamma_derivative, gamma_sum
from pnormreg.oracle import finite_difference, kkt_solve
from pnormreg.residual import (MWUConfig, ResidualProblem, approx_via_z_search, bregman_constant,
                               lemma_step, normalize_thresholds, residual_gradient,
                               solve_residual, solve_weighted_lr, solve_weighted_range, z_grid)
from pnormreg.sparse import SparseMatrix


def test_gradient_basic(rng):
    A, D = dense_sparse(rng, 15, 4)
    x, b = rng.standard_normal(4), rng.standard_normal(15)
    assert np.allclose(residual_gradient(2.0, x, A, b), 2 * (D @ x - b))
    assert not np.any(residual_gradient(3.0, x, A, A.matvec(x)))
    assert np.all(np.isfinite(residual_gradient(1.5, np.zeros(3))))


@pytest.mark.parametrize("p", [1.5, 3.0, 4.5])
def test_gradient_vs_finite_difference(rng, p):
    r = rng.uniform(0.2, 2.0, 8) * rng.choice([-1, 1], 8)
    fd = finite_difference(lambda v: float(np.sum(np.abs(v) ** p)), r, (1e-3, 5e-4, 2.5e-4))
    g = residual_gradient(p, r)
    assert np.max(np.abs(fd.gradient - g) / np.abs(g)) <= 1e-6


def test_constants():
    assert bregman_constant(3.0) == pytest.approx(2 / 24)
    lam = lemma_step(4.0)
    assert lam ** min(1, 3.0) <= 3 / (4 * 4**4) * (1 + 1e-12)
    lam = lemma_step(1.5)
    assert lam**0.5 == pytest.approx(0.5 / (1.5 * 4**1.5))


def test_weighted_lr_unconstrained(rng):
    g = rng.standard_normal(10)
    assert np.allclose(solve_weighted_lr(None, np.ones(10), g, 2.0), 2.0 * g / (g @ g))


def test_weighted_lr_vs_kkt(rng):
    A, D = dense_sparse(rng, 12, 3)
    R = rng.uniform(0.5, 3.0, 12)
    g = rng.standard_normal(12)
    z = 1.7
    ref = kkt_solve(R, A, g, z)
    delta = solve_weighted_lr(A, R, g, z)
    assert np.max(np.abs(delta - ref.x)) <= 1e-9
    assert 0.5 * delta @ (R * delta) <= ref.value + 1e-9
    assert np.max(np.abs(D.T @ delta)) <= 1e-10 and abs(g @ delta - z) <= 1e-10


def test_weighted_lr_with_maintained_preconditioner(rng):
    from pnormreg.linsolve import MaintainedInverse
    A, _ = dense_sparse(rng, 40, 5)
    R = rng.uniform(1.0, 3.0, 40)
    g = rng.standard_normal(40)
    # preconditioner built on R̂ ≤ R ≤ 3R̂
    inv = MaintainedInverse.build(A, 1.0 / np.ones(40))
    delta = solve_weighted_lr(A, R, g, 1.0, inv, lam=3.0)
    assert np.allclose(delta, kkt_solve(R, A, g, 1.0).x, atol=1e-9)


def test_weighted_lr_infeasible(rng):
    A, D = dense_sparse(rng, 12, 3)
    with pytest.raises(InfeasibleError):
        solve_weighted_lr(A, np.ones(12), D @ rng.standard_normal(3), 1.0)
    with pytest.raises(ContractViolation):
        solve_weighted_lr(A, np.zeros(12), np.ones(12), 1.0)


def test_weighted_range_vs_dense(rng):
    A, D = dense_sparse(rng, 30, 4)
    R = rng.uniform(0.5, 2.0, 30)
    g = rng.standard_normal(30)
    delta = solve_weighted_range(A, R, g, 0.8)
    # Lagrange: G δ ∝ h, gᵀAδ = z
    h = D.T @ g
    u = np.linalg.solve(D.T @ (R[:, None] * D), h)
    assert np.allclose(delta, 0.8 * u / (h @ u), atol=1e-12)


def test_p2_collapses_to_one_solve(rng):
    A, _ = dense_sparse(rng, 20, 4)
    g = rng.standard_normal(20)
    prob = ResidualProblem(A, g, np.ones(20), 1.3, 2.0)
    sol = solve_residual(prob)
    assert np.allclose(sol.delta, solve_weighted_lr(A, np.ones(20), g, 1.3), atol=1e-8)


def test_rejects_p_below_two(rng):
    A, _ = dense_sparse(rng, 20, 4)
    with pytest.raises(ContractViolation):
        solve_residual(ResidualProblem(A, np.ones(20), np.ones(20), 1.0, 1.5))
    with pytest.raises(ContractViolation):
        ResidualProblem(A, np.ones(19), np.ones(20), 1.0, 3.0)


def gamma_constrained_optimum(D, g, t, z, p):
    """min γ_p(t, Δ) s.t. DᵀΔ = 0, gᵀΔ = z by BFGS on a null-space parametrization."""
    M = np.column_stack([D, g])
    rhs = np.zeros(M.shape[1])
    rhs[-1] = z
    d0 = np.linalg.lstsq(M.T, rhs, rcond=None)[0]
    N = sla.null_space(M.T)
    f = lambda u: gamma_sum(p, t, d0 + N @ u)  # noqa: E731
    jac = lambda u: N.T @ gamma_derivative(p, t, d0 + N @ u)  # noqa: E731
    res = minimize(f, np.zeros(N.shape[1]), jac=jac, method="BFGS", options={"gtol": 1e-12})
    return res.fun


@pytest.mark.parametrize("p", [3.0, 4.0])
def test_mwu_quality_and_invariants(rng, p):
    n, d = 60, 4
    A, D = dense_sparse(rng, n, d, 0.5)
    g = residual_gradient(p, rng.standard_normal(n))
    t, _ = normalize_thresholds(np.abs(rng.standard_normal(n)), p)
    opt = gamma_constrained_optimum(D, g, t, 1.0, p)
    # scale the budget so the optimum is about one
    z = 1.0 / opt ** (1.0 / p)
    prob = ResidualProblem(A, g, t, z, p)
    snaps = []
    sol = solve_residual(prob, MWUConfig(max_iter=400),
                         trace=lambda e: snaps.append(e["state"].w.copy()))
    delta = sol.delta
    assert gamma_sum(p, t, delta) <= 32 * gamma_constrained_optimum(D, g, t, z, p)
    assert np.max(np.abs(D.T @ delta)) <= 1e-8 * max(1.0, np.abs(delta).max())
    assert abs(g @ delta - z) <= 1e-8 * abs(z)
    assert all(np.all(b >= a) for a, b in zip(snaps, snaps[1:]))
    assert sol.max_drift <= 4.0
    assert all(2**e <= sol.iterations for e in sol.level_counts)


def test_z_grid_size():
    for d in (2, 10, 100, 1000):
        assert len(z_grid(1.0, d)) == max(3, math.ceil(math.log(d)))
        assert len(z_grid(1.0, d, C=2.0)) == max(3, math.ceil(2 * math.log(d)))


def test_z_search_brackets_quadratic_optimum(rng):
    # with huge thresholds γ_p is the quadratic (p/2)t^{p−2}y² on the whole
    # relevant range, so the maximizer is a weighted least-squares solution
    p, n, d = 3.0, 40, 4
    A, D = dense_sparse(rng, n, d, 0.5)
    g = 1e-3 * rng.standard_normal(n)
    t = rng.uniform(50, 100, n)
    c = bregman_constant(p)
    R = c * p * t ** (p - 2)
    N = sla.null_space(D.T)
    Hn = N.T @ (R[:, None] * N)
    y_star = N @ np.linalg.solve(Hn, N.T @ g)
    z_star = g @ y_star
    best = 0.5 * z_star
    res = approx_via_z_search(A, t, g, p, MWUConfig(max_iter=200))
    steps = np.log(res.grid / z_star) / np.log(res.grid[1] / res.grid[0])
    assert np.min(np.abs(steps)) <= 1.0
    assert res.value >= 0.5 * best
    assert res.value <= best * (1 + 1e-9)
    # unimodal over the grid
    k = int(np.argmax(res.values))
    assert np.all(np.diff(res.values[:k + 1]) >= -1e-12 * abs(best))
    assert np.all(np.diff(res.values[k:]) <= 1e-12 * abs(best))


def test_z_search_unimodal_random(rng):
    p = 4.0
    for _ in range(3):
        A, _ = dense_sparse(rng, 50, 5, 0.5)
        g = residual_gradient(p, rng.standard_normal(50))
        t = np.abs(rng.standard_normal(50))
        res = approx_via_z_search(A, t, g, p, MWUConfig(max_iter=200))
        k = int(np.argmax(res.values))
        tol = 1e-6 * abs(res.values[k])
        assert np.all(np.diff(res.values[:k + 1]) >= -tol)
        assert np.all(np.diff(res.values[k:]) <= tol)
