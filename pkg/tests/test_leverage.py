import math

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import dense_sparse
from pnormreg.errors import ContractViolation
from pnormreg.leverage import (SpectralConfig, estimate_leverage_jl, generalized_leverage_scores,
                               jl_rows, leverage_scores_exact, lewis_weights, sample_rows,
                               spectral_approximation, spectral_bounds)
from pnormreg.linsolve import build_inverse_operator
from pnormreg.sparse import SeededRng, SparseMatrix


def pinv_scores(D, B=None):
    B = D if B is None else B
    P = np.linalg.pinv(B.T @ B)
    return np.einsum("ij,jk,ik->i", D, P, D)


def test_sample_all_rows_when_saturated():
    S = sample_rows(np.ones(10), 1.0, 1.0, SeededRng(0), d=3)
    assert np.array_equal(S.indices, np.arange(10))
    assert np.all(S.weights == 1.0)


def test_sample_count_mean(rng):
    u = rng.uniform(0, 0.05, 400)
    d, alpha, c = 8, 1.0, 2.0
    p = np.minimum(1, alpha * u * c * math.log(d))
    base = SeededRng(5)
    counts = [len(sample_rows(u, alpha, c, base.spawn(k), d)) for k in range(1000)]
    sigma = math.sqrt(np.sum(p * (1 - p)) / 1000)
    assert abs(np.mean(counts) - p.sum()) <= 3 * sigma


def test_sample_size_bound(rng):
    u = rng.uniform(0, 0.02, 2000)
    alpha, c, d = 1.0, 3.0, 10
    cap = 2 * u.sum() * alpha * c * math.log(d)
    sizes = [len(sample_rows(u, alpha, c, SeededRng(k), d)) for k in range(50)]
    assert max(sizes) <= cap


def test_sample_weights_and_indices(rng):
    u = rng.uniform(0, 1, 100)
    S = sample_rows(u, 0.2, 1.0, SeededRng(1), d=4)
    assert np.all(np.diff(S.indices) > 0)
    assert np.allclose(S.weights, S.probabilities ** -0.5)
    with pytest.raises(ContractViolation):
        sample_rows(u, 0.0, 1.0, SeededRng(1), d=4)


def test_leverage_identity_and_sum(rng):
    assert np.allclose(leverage_scores_exact(SparseMatrix.identity(5)).values, 1.0)
    A, D = dense_sparse(rng, 60, 7)
    est = leverage_scores_exact(A)
    assert est.sum <= 7 + 1e-9
    assert np.allclose(est.values, pinv_scores(D), atol=1e-12)


def test_leverage_duplicated_row():
    # row 0 copied 3 times, everything else orthogonal to it
    D = np.zeros((5, 3))
    D[:3, 0] = 2.0
    D[3, 1] = 1.0
    D[4, 2] = 1.0
    vals = leverage_scores_exact(SparseMatrix.from_dense(D)).values
    assert np.allclose(vals[:3], 1 / 3)


def test_leverage_rank_deficient(rng):
    D = rng.standard_normal((20, 3))
    D = np.column_stack([D, D[:, 0] + D[:, 1]])
    est = leverage_scores_exact(SparseMatrix.from_dense(D))
    assert est.rank_deficient
    assert np.allclose(est.values, pinv_scores(D), atol=1e-9)


def test_generalized_scores(rng):
    A, D = dense_sparse(rng, 30, 5)
    assert np.allclose(generalized_leverage_scores(A, A).values, leverage_scores_exact(A).values)
    B, E = dense_sparse(rng, 40, 5)
    assert np.allclose(generalized_leverage_scores(A, B).values, pinv_scores(D, E), rtol=1e-10)
    # B kills the last coordinate; rows touching it leave the range
    F = E.copy()
    F[:, 4] = 0
    vals = generalized_leverage_scores(A, SparseMatrix.from_dense(F)).values
    touches = D[:, 4] != 0
    assert np.all(np.isinf(vals[touches])) and np.all(np.isfinite(vals[~touches]))


def test_jl_rows_formula():
    assert jl_rows(1000, 10) == math.ceil(4000 / 9 * (11 * math.log(10) + math.log(100)))


def test_jl_identity():
    I = SparseMatrix.identity(6)
    u = estimate_leverage_jl(I, I, build_inverse_operator(I), 4000, SeededRng(0)).values
    assert np.all((u >= 0.9) & (u <= 2.0))


@pytest.mark.parametrize("mode", ["factored", "explicit"])
def test_jl_overestimates(rng, mode):
    A, D = dense_sparse(rng, 500, 20, 0.3)
    S = sample_rows(np.ones(500), 0.3, 1.0, SeededRng(2), d=20)
    SA = S.apply(A)
    u = estimate_leverage_jl(A, S, build_inverse_operator(SA), jl_rows(500, 20), SeededRng(3),
                             mode=mode).values
    tau = generalized_leverage_scores(A, SA).values
    ok = (u >= tau) & (u <= 2 * tau)
    assert ok.mean() >= 0.99


def test_spectral_square_keeps_everything(rng):
    D = rng.standard_normal((6, 6)) + 3 * np.eye(6)
    res = spectral_approximation(SparseMatrix.from_dense(D), SeededRng(0))
    assert len(res.sample) == 6
    # all rows kept at the final 1/√1.5 rescaling
    assert np.allclose(res.At.gram(), D.T @ D / 1.5)


def test_spectral_certificate(rng):
    A, _ = dense_sparse(rng, 2000, 20, 0.1)
    res = spectral_approximation(A, SeededRng(4), SpectralConfig())
    lo, hi = spectral_bounds(A, res.At)
    assert lo >= 0.25 and hi <= 1 + 1e-6
    h = res.history
    assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))


def test_undersampling_rarely_overshoots(rng):
    A, D = dense_sparse(rng, 300, 6, 0.5)
    G = D.T @ D
    u = leverage_scores_exact(A).values
    alpha = 0.5
    good = 0
    for k in range(100):
        S = sample_rows(u, 9 * alpha, 30.0, SeededRng(k), 6, scale=math.sqrt(3 * alpha / 4))
        mu = sla.eigh(S.apply(A).gram(), G, eigvals_only=True)
        good += mu.max() <= 1 + 1e-9
    assert good >= 95


def test_uniformity_of_entries(rng):
    A, D = dense_sparse(rng, 80, 6)
    tau = leverage_scores_exact(A).values
    Y = D @ rng.standard_normal((6, 500))
    assert np.all(Y**2 <= tau[:, None] * (Y**2).sum(axis=0) + 1e-9)


def test_lewis_weights_near_two(rng):
    A, _ = dense_sparse(rng, 50, 5)
    w = lewis_weights(A, 2 + 1e-9).weights
    assert np.allclose(w, leverage_scores_exact(A).values, atol=1e-6)


def test_lewis_weights_fixed_point(rng):
    A, _ = dense_sparse(rng, 300, 10, 0.4)
    res = lewis_weights(A, 4.0, iters=100)
    assert res.residual <= 1e-8
    assert abs(res.weights.sum() - 10) <= 1e-6
    with pytest.raises(ContractViolation):
        lewis_weights(A, 1.5)
