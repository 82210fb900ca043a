import numpy as np
import pytest

from conftest import dense_sparse
from pnormreg import generators
from pnormreg.errors import ContractViolation, DimensionError, InfeasibleError
from pnormreg.leverage import lewis_weights
from pnormreg.oracle import pnorm_oracle
from pnormreg.pnorm import (RegressionProblem, SolveConfig, d_weight_matrix, homotopy_solve,
                            initial_point, sample_smoothed_qnorm, smoothed_qnorm, solve,
                            solve_p1, solve_p2)
from pnormreg.sparse import SeededRng, SparseMatrix


def test_problem_validation(rng):
    A, _ = dense_sparse(rng, 10, 3)
    with pytest.raises(ContractViolation):
        RegressionProblem(A, np.ones(10), p=1.0)
    with pytest.raises(DimensionError):
        RegressionProblem(A, np.ones(9), p=3.0)
    with pytest.raises(ContractViolation):
        RegressionProblem(A, np.ones(10), np.eye(3), p=3.0)
    with pytest.raises(DimensionError):
        RegressionProblem(A, np.ones(10), p=3.0, form="p2")
    with pytest.raises(ContractViolation):
        SolveConfig(method="simplex")


def test_initial_point_pinned_by_constraints(rng):
    A, _ = dense_sparse(rng, 20, 4)
    v = rng.standard_normal(4)
    prob = RegressionProblem(A, rng.standard_normal(20), np.eye(4), v, p=3.0)
    assert np.allclose(initial_point(prob), v)


def test_initial_point_inconsistent_constraints(rng):
    A, _ = dense_sparse(rng, 20, 2)
    C = np.array([[1.0, 0.0], [1.0, 0.0]])
    prob = RegressionProblem(A, rng.standard_normal(20), C, np.array([1.0, 2.0]), p=3.0)
    with pytest.raises(InfeasibleError):
        initial_point(prob)


@pytest.mark.parametrize("p", [2.5, 3.0, 4.0, 6.0])
def test_initial_point_ratio(p):
    for seed in range(3):
        prob = generators.regression_instance(100, 5, p, seed=seed)
        x0 = initial_point(prob)
        opt = pnorm_oracle(prob.A, prob.b, p=p).value
        assert prob.objective(x0) <= prob.n ** ((p - 2) / 2) * opt


def test_p2_least_squares_exits_immediately(rng):
    A, D = dense_sparse(rng, 50, 6)
    b = rng.standard_normal(50)
    rep = solve_p1(RegressionProblem(A, b, p=2.0))
    assert rep.iterations == 0 and rep.converged
    assert np.max(np.abs(rep.x - np.linalg.lstsq(D, b, rcond=None)[0])) <= 1e-10


def test_p15_matches_oracle():
    prob = generators.regression_instance(256, 8, 1.5, seed=1)
    rep = solve_p1(prob, 1e-8)
    opt = pnorm_oracle(prob.A, prob.b, p=1.5)
    assert not opt.flagged
    assert rep.objective <= (1 + 1e-6) * opt.value
    assert abs(rep.objective - prob.objective(rep.x)) <= 1e-12 * rep.objective


def test_constrained_p1_feasible_and_monotone():
    prob = generators.regression_instance(128, 6, 3.0, seed=4, constraints=2)
    rep = solve_p1(prob, 1e-8)
    opt = pnorm_oracle(prob.A, prob.b, prob.C, prob.v, p=3.0)
    assert rep.constraint_residual <= 1e-8
    assert rep.objective <= (1 + 1e-6) * opt.value
    objs = [h["objective"] for h in rep.history if "objective" in h]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(objs, objs[1:]))
    assert rep.lower_bound <= opt.value * (1 + 1e-9)


def test_sampled_route():
    prob = generators.regression_instance(512, 6, 1.5, seed=2)
    rep = solve_p1(prob, 1e-8, SolveConfig(sampled=True))
    opt = pnorm_oracle(prob.A, prob.b, p=1.5).value
    assert rep.route.startswith("sampled")
    assert rep.objective <= (1 + 1e-6) * opt


def test_p2_identity():
    b = np.array([1.0, -2.0, 0.5])
    for p in (1.5, 3.0):
        rep = solve_p2(RegressionProblem(SparseMatrix.identity(3), b, p=p, form="p2"))
        assert np.allclose(rep.x, b)


def test_p2_min_norm(rng):
    A, D = dense_sparse(rng, 30, 4)
    b = rng.standard_normal(4)
    rep = solve_p2(RegressionProblem(A, b, p=2.0, form="p2"))
    assert np.allclose(rep.x, np.linalg.pinv(D.T) @ b, atol=1e-10)


@pytest.mark.parametrize("p", [1.5, 4.0])
def test_p2_matches_oracle(p):
    prob = generators.regression_instance(128, 6, p, form="p2", seed=3)
    rep = solve(prob, 1e-8)
    opt = pnorm_oracle(prob.A, prob.b, p=p, form="p2")
    assert rep.objective <= (1 + 1e-6) * opt.value
    assert rep.constraint_residual <= 1e-8
    assert rep.gap >= 0


def test_homotopy_trivial_and_quadratic(rng):
    A, D = dense_sparse(rng, 40, 4)
    rep = homotopy_solve(RegressionProblem(A, np.zeros(40), p=2.5))
    assert not np.any(rep.x)
    b = rng.standard_normal(40)
    rep = homotopy_solve(RegressionProblem(A, b, p=2.0))
    assert np.allclose(rep.x, np.linalg.lstsq(D, b, rcond=None)[0], atol=1e-8)
    with pytest.raises(ContractViolation):
        homotopy_solve(RegressionProblem(A, b, np.eye(4), np.zeros(4), p=2.5))


def test_homotopy_additive_gap():
    prob = generators.regression_instance(512, 16, 2.25, seed=5)
    eps = 1e-4 * np.linalg.norm(prob.b) ** 2.25
    rep = homotopy_solve(prob, eps, SolveConfig(method="homotopy"))
    opt = pnorm_oracle(prob.A, prob.b, p=2.25).value
    assert rep.objective - opt <= eps


def test_d_weight_matrix(rng):
    A, D = dense_sparse(rng, 10, 3)
    x = rng.standard_normal(3)
    b = A.matvec(x)
    Dw = d_weight_matrix(3.0, x, A, b, 0.7, 0.2)
    assert np.allclose(Dw, 1.0 * 0.7 ** (1.5 * (2 - 4 / 3)))
    b2 = rng.standard_normal(10)
    assert np.allclose(d_weight_matrix(2.0, x, A, b2, 0.7, 0.2), 0.5)
    for p in (1.5, 3.0):
        r = D @ x - b2
        ref = (p - 1) / 2 * np.maximum(0.7 ** (p / 2), np.abs(r) ** (p / 2) - np.sign(p - 2) * 0.2) ** (2 - 4 / p)
        assert np.allclose(d_weight_matrix(p, x, A, b2, 0.7, 0.2), ref)
    with pytest.raises(ContractViolation):
        d_weight_matrix(3.0, x, A, b, 0.0, 0.2)


def test_smoothed_sampler_pure_lewis(rng):
    A, _ = dense_sparse(rng, 400, 5, 0.5)
    S = sample_smoothed_qnorm(A, np.zeros(400), 3.0, SeededRng(0), c=1.0)
    lew = lewis_weights(A, 3.0).weights
    p = np.minimum(1.0, lew * np.log(5))
    assert np.allclose(S.probabilities, p[S.indices])


def ratio_ok(A, t, q, seed, trials=500):
    S = sample_smoothed_qnorm(A, t, q, SeededRng(seed))
    r = np.random.default_rng(seed)
    X = r.standard_normal((A.n_cols, trials)) * np.exp(r.uniform(-3, 3, trials))
    Y = A.matmat(X)
    ratios = np.array([smoothed_qnorm(t[S.indices], Y[S.indices, k], q, S.weights)
                       / smoothed_qnorm(t, Y[:, k], q) for k in range(trials)])
    return np.all((ratios >= 0.5) & (ratios <= 1.5))


def test_smoothed_sampler_quadratic_case():
    A = generators.random_sparse(3000, 6, 0.3, 7)
    assert ratio_ok(A, np.ones(3000), 2.0, 1)


def test_smoothed_sampler_combined():
    A = generators.random_sparse(3000, 6, 0.3, 8)
    t = generators.log_uniform_thresholds(3000, 2.0, 9)
    assert sum(ratio_ok(A, t, 3.0, s) for s in range(5)) >= 5
    with pytest.raises(ContractViolation):
        sample_smoothed_qnorm(A, t, 1.5)
