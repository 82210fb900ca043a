"""The ten acceptance criteria at their stated tolerances.

Each test runs the matching verifier check in full mode, so ``pytest`` and
``pnormreg verify`` exercise the same code. One PASS/FAIL line per criterion
is printed in the terminal summary.
"""

import math

import numpy as np
import pytest

from pnormreg import checks

pytestmark = pytest.mark.slow

LINES = {}


def run(name):
    res = checks.run_check(checks.BY_NAME[name], "full")
    LINES[name] = res.line()
    print(res.line())
    return res


def test_01_gamma_predicates():
    res = run("gamma")
    assert res.passed, res.detail
    for key in ("bregman", "scaling", "homogeneity", "continuity", "two_sided",
                "perturbation", "lower_bound"):
        assert res.metrics[key] <= checks.SLACK, key
    assert res.seconds <= 30


def test_02_gamma_sampling():
    res = run("sampling")
    assert res.passed, res.detail
    assert len(res.metrics["pass_rates"]) == 20
    assert min(res.metrics["pass_rates"]) >= 0.99
    assert max(res.metrics["supports"]) <= 4096 / 4


def test_03_spectral_approximation():
    res = run("spectral")
    assert res.passed, res.detail
    lo, hi, rows = (np.array(res.metrics[k]) for k in ("mu_min", "mu_max", "rows"))
    assert lo.size == 50
    assert np.sum((lo >= 0.25) & (hi <= 1 + 1e-6)) >= 48
    assert rows.max() <= 20 * 50 * math.log(50)


def test_04_closed_form_vs_kkt():
    res = run("closed-form")
    assert res.passed, res.detail
    assert max(res.metrics.values()) <= 1e-9


def test_05_outer_contraction():
    res = run("contraction")
    assert res.passed, res.detail
    for key, m in res.metrics.items():
        assert m["steps"] > 0 and m["average_ratio"] <= m["bound"], key


def test_06_end_to_end():
    res = run("end-to-end")
    assert res.passed, res.detail
    assert res.metrics["worst_objective"] <= 1e-6
    assert res.metrics["worst_constraint"] <= 1e-8
    assert not res.metrics["failures"]


def test_07_inverse_maintenance():
    res = run("inverse")
    assert res.passed, res.detail
    assert res.metrics["error"] <= 1e-9
    assert res.metrics["drift"] <= 4.0


def test_08_richardson():
    res = run("richardson")
    assert res.passed, res.detail
    for lam, ratio in res.metrics.items():
        assert ratio <= 1 - 1 / lam + 0.01


def test_09_scaling():
    res = run("scaling")
    assert res.passed, res.detail
    assert len(res.metrics["points"]) == 4
    assert max(res.metrics["ratios"]) <= 2.5


def test_10_determinism():
    res = run("determinism")
    assert res.passed, res.detail
