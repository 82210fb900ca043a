import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import dense_sparse
from pnormreg import generators
from pnormreg.errors import ContractViolation
from pnormreg.gamma import (GammaInstance, bregman_bounds, bucket_rows, default_h, gamma_derivative,
                            gamma_preservation_report, gamma_sample, gamma_second, gamma_sum,
                            gamma_value, homogeneity_pair, perturbation_bound,
                            quadratic_extension, quadratic_extension_curvature, sample_rounds,
                            scaling_bounds, sum_lower_bound, two_sided_bounds)
from pnormreg.oracle import finite_difference
from pnormreg.sparse import SeededRng, SparseMatrix

ps = st.floats(1.05, 8.0)
ts = st.floats(0.0, 10.0)
xs = st.floats(-20.0, 20.0)


def test_values():
    assert gamma_value(2.0, 0.3, 1.7) == pytest.approx(1.7**2)
    assert gamma_value(2.0, 5.0, 1.7) == pytest.approx(1.7**2)
    assert gamma_value(3.0, 0.0, -1.5) == pytest.approx(1.5**3)
    assert gamma_value(3.0, 0.0, 0.0) == 0.0
    assert gamma_value(1.5, 1.0, 2.0) == pytest.approx(2.578427, abs=1e-6)
    assert gamma_value(1.5, 1.0, 2.0) == pytest.approx(2**1.5 - 0.25, rel=1e-14)


def test_vector_sum(rng):
    t = rng.uniform(0, 2, 50)
    x = rng.standard_normal(50)
    w = rng.uniform(0, 1, 50)
    each = gamma_value(2.5, t, x)
    assert gamma_sum(2.5, t, x) == pytest.approx(each.sum())
    assert gamma_sum(2.5, t, x, w) == pytest.approx((w * each).sum())
    g = GammaInstance(2.5, t)
    assert g.value(x) == pytest.approx(each.sum())
    assert np.allclose(g.grad(x), gamma_derivative(2.5, t, x))


def test_contract_errors():
    with pytest.raises(ContractViolation):
        gamma_value(1.0, 1.0, 1.0)
    with pytest.raises(ContractViolation):
        gamma_value(2.0, -1.0, 1.0)
    with pytest.raises(ContractViolation):
        GammaInstance(3.0, np.array([-1.0]))
    with pytest.raises(ContractViolation):
        quadratic_extension(3.0, 1.0, 2.0, 1.0, 0.0)


@given(ps, st.floats(0.01, 10.0))
def test_derivative_branch_agreement(p, t):
    assert gamma_derivative(p, t, 0.0) == 0.0
    assert gamma_derivative(p, t, t) == pytest.approx(p * t ** (p - 1), rel=1e-12)
    assert gamma_derivative(p, t, -t) == pytest.approx(-p * t ** (p - 1), rel=1e-12)


def test_derivative_vs_finite_difference():
    # 10⁵ points, away from the kink where the second derivative jumps
    rng = np.random.default_rng(8)
    n = 100_000
    p = rng.uniform(1.1, 6.0, n)
    t = rng.uniform(0.1, 3.0, n)
    x = rng.uniform(-5, 5, n)
    keep = np.abs(np.abs(x) - t) > 1e-3 * t
    p, t, x = p[keep], t[keep], x[keep]
    h = 1e-5 * np.maximum(1.0, np.abs(x))
    g = np.empty_like(x)
    fd = np.empty_like(x)
    for pv in np.unique(np.round(p, 1)):
        m = np.round(p, 1) == pv
        g[m] = gamma_derivative(pv, t[m], x[m])
        fd[m] = (gamma_value(pv, t[m], x[m] + h[m]) - gamma_value(pv, t[m], x[m] - h[m])) / (2 * h[m])
    rel = np.abs(fd - g) / np.maximum(np.abs(g), 1e-3)
    assert rel.max() <= 1e-6


def test_sum_gradient_vs_extrapolated_differences(rng):
    t = rng.uniform(0.5, 2.0, 6)
    x = rng.uniform(-4, 4, 6)
    fd = finite_difference(lambda y: gamma_sum(3.0, t, y), x, (1e-3, 5e-4, 2.5e-4))
    assert np.allclose(fd.gradient, gamma_derivative(3.0, t, x), rtol=1e-6)


def test_second_derivative():
    assert gamma_second(3.0, 2.0, 1.0) == pytest.approx(3 * 2.0)
    assert gamma_second(3.0, 1.0, 2.0) == pytest.approx(6 * 2.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 5.0])
def test_quadratic_extension(p):
    t, lo, hi = 1.3, -0.7, 2.5
    for s in np.linspace(lo, hi, 9):
        v, dv = quadratic_extension(p, t, lo, hi, s)
        assert v == pytest.approx(gamma_value(p, t, s), rel=1e-14)
        assert dv == pytest.approx(gamma_derivative(p, t, s), rel=1e-14)
    for edge, out in ((lo, -1.0), (hi, 1.0)):
        v0, d0 = quadratic_extension(p, t, lo, hi, edge)
        for e in (1e-4, 1e-6):
            v_in, d_in = quadratic_extension(p, t, lo, hi, edge - out * e)
            v_out, d_out = quadratic_extension(p, t, lo, hi, edge + out * e)
            # one-sided limits agree: jumps shrink with e
            scale = abs(v0) + abs(d0) + 1.0
            assert abs(v_out - v_in - 2 * e * out * d0) <= 1e3 * e * e * scale
            assert abs(d_out - d_in) <= 1e3 * e * scale
    # constant second difference outside, equal to γ'' at the clamp point
    for edge, side in ((hi, 1.0), (lo, -1.0)):
        s = edge + side * np.array([1.0, 2.0, 3.0])
        v = np.array([quadratic_extension(p, t, lo, hi, si)[0] for si in s])
        second = v[2] - 2 * v[1] + v[0]
        assert second == pytest.approx(gamma_second(p, t, edge), rel=1e-9)
        assert quadratic_extension_curvature(p, t, lo, hi, s[2]) == pytest.approx(gamma_second(p, t, edge))


@given(ps, st.floats(-10, 10), st.floats(-10, 10))
def test_bregman_sandwich(p, t, y):
    lo, mid, hi = bregman_bounds(p, t, y)
    scale = abs(t) ** p + abs(y) ** p + abs(t + y) ** p + 1.0
    assert lo <= mid + 1e-9 * scale
    assert mid <= hi + 1e-9 * scale


@given(ps, ts, xs, st.floats(1e-3, 1e3))
def test_scaling_sandwich(p, t, y, lam):
    lo, mid, hi = scaling_bounds(p, t, y, lam)
    assert lo <= mid * (1 + 1e-9) + 1e-300
    assert mid <= hi * (1 + 1e-9) + 1e-300


@given(st.floats(1.05, 2.0), ts, xs, st.floats(1e-3, 1e3))
def test_homogeneity(q, t, y, r):
    lhs, rhs = homogeneity_pair(q, t, y, r)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@given(st.floats(2.0, 8.0), st.floats(0.0, 10.0), xs)
def test_two_sided_for_large_q(q, t, y):
    lo, mid, hi = two_sided_bounds(q, t, y)
    assert lo <= mid * (1 + 1e-9) and mid <= hi * (1 + 1e-9)


def test_two_sided_requires_q_at_least_two():
    with pytest.raises(ContractViolation):
        two_sided_bounds(1.5, 1.0, 1.0)


def test_perturbation_and_lower_bounds(rng):
    for _ in range(200):
        q = rng.uniform(1.05, 2.0)
        n = rng.integers(1, 20)
        t = rng.uniform(1, 5, n)
        y = rng.uniform(0, 3, n)
        yt = np.abs(y + rng.normal(0, 0.3, n))
        diff, bound = perturbation_bound(q, t, y, yt)
        assert diff <= bound * (1 + 1e-9) + 1e-12
        total, low = sum_lower_bound(q, t, rng.standard_normal(n))
        assert total >= low * (1 - 1e-9)
    T = rng.uniform(1, 5, (4, 7))
    diff, bound = perturbation_bound(1.5, T, np.abs(T), np.abs(T) * 1.1)
    assert diff.shape == (4,) and np.all(diff <= bound)


def test_bucket_partition(rng):
    t = 10 ** rng.uniform(0, 3, 500)
    b = bucket_rows(t)
    allidx = np.sort(np.concatenate(b.buckets))
    assert np.array_equal(allidx, np.arange(500))
    assert b.eta <= math.ceil(math.log2(t.max() / t.min())) + 1
    for j, members in enumerate(b.buckets, start=1):
        assert np.all(t[members] >= 2 ** (j - 1) * b.beta * (1 - 1e-12))
        assert np.all(t[members] < 2 ** j * b.beta * (1 + 1e-12)) or j == b.eta
    with pytest.raises(ContractViolation):
        bucket_rows(np.array([0.0, 1.0]))


def test_rounds_and_h():
    assert sample_rounds(2) == 1
    assert sample_rounds(10**6) == math.ceil(math.log(math.log(10**6)))
    assert default_h(1000, 8, 0.5) == pytest.approx(0.5 * 8 * math.log(1000))


def test_sample_square_keeps_everything(rng):
    D = rng.standard_normal((8, 8)) + 4 * np.eye(8)
    A = SparseMatrix.from_dense(D)
    t = rng.uniform(1, 3, 8)
    res = gamma_sample(A, t, 1.5, h=1e6, rng=SeededRng(0))
    assert np.array_equal(res.weights, np.ones(8))
    rep = gamma_preservation_report(A, t, 1.5, res, trials=50, rng=SeededRng(1))
    assert rep["max"] <= 1e-12


def test_sample_preserves_sums():
    A = generators.random_sparse(4096, 8, 0.3, 1)
    t = generators.log_uniform_thresholds(4096, 3.0, 2)
    res = gamma_sample(A, t, 1.5, rng=SeededRng(3))
    assert len(res.sample) <= 4096 / 4
    rep = gamma_preservation_report(A, t, 1.5, res, trials=500, rng=SeededRng(4))
    assert rep["fail_rate_075"] <= 0.01
    assert all(b <= a for a, b in zip(res.sizes, res.sizes[1:]))


def test_sample_failure_rate_falls_with_h():
    A = generators.random_sparse(2048, 6, 0.3, 5)
    t = generators.log_uniform_thresholds(2048, 2.0, 6)
    rates = []
    for C_h in (0.002, 0.02, 0.2):
        fails = []
        for k in range(4):
            res = gamma_sample(A, t, 1.5, C_h=C_h, rng=SeededRng(10 + k))
            rep = gamma_preservation_report(A, t, 1.5, res, trials=100, rng=SeededRng(k))
            fails.append(rep["mean"])
        rates.append(np.mean(fails))
    assert rates[0] >= rates[1] >= rates[2]


def test_sample_contracts(rng):
    A, _ = dense_sparse(rng, 20, 3)
    with pytest.raises(ContractViolation):
        gamma_sample(A, np.full(20, 0.5), 1.5)
    with pytest.raises(ContractViolation):
        gamma_sample(A, np.ones(20), 2.5)
    with pytest.raises(ContractViolation):
        gamma_sample(A, np.ones(20), 1.5, h=0.0)
