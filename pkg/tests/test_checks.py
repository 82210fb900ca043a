import numpy as np
import pytest

from pnormreg import checks, generators


def test_generators_shapes_and_seeds():
    for kind in generators.KINDS:
        A = generators.design_matrix(kind, 50, 5, seed=3)
        B = generators.design_matrix(kind, 50, 5, seed=3)
        assert A.shape == (50, 5)
        assert np.array_equal(A.to_dense(), B.to_dense())
        assert np.linalg.matrix_rank(A.to_dense()) == 5
    with pytest.raises(ValueError):
        generators.design_matrix("lumpy", 5, 2)


def test_rows_per_row():
    A = generators.random_rows_per_row(100, 10, 3, seed=1)
    assert np.all(A.row_nnz() == 3) and A.nnz == 300
    with pytest.raises(ValueError):
        generators.random_rows_per_row(10, 3, 5)


def test_regression_instances_feasible():
    p1 = generators.regression_instance(40, 4, 3.0, constraints=2, seed=2)
    assert p1.C.shape == (2, 4)
    assert np.linalg.matrix_rank(p1.C) == 2
    p2 = generators.regression_instance(40, 4, 3.0, form="p2", seed=2)
    assert p2.b.shape == (4,)
    t = generators.log_uniform_thresholds(1000, 2.0, 1)
    assert t.min() >= 1 and t.max() <= 100


def test_select():
    assert [c.name for c in checks.select()] == [c.name for c in checks.CHECKS]
    assert [c.name for c in checks.select(["gamma,richardson"])] == ["gamma", "richardson"]
    with pytest.raises(KeyError):
        checks.select(["nope"])


def test_strip_timing():
    doc = {"a": 1, "wall_time": 3.0, "inner": [{"seconds": 2, "b": 2}]}
    assert checks.strip_timing(doc) == {"a": 1, "inner": [{"b": 2}]}


@pytest.mark.parametrize("name", [c.name for c in checks.CHECKS])
def test_quick_mode(name):
    res = checks.run_check(checks.BY_NAME[name], "quick")
    assert res.passed, res.detail
    assert res.line().startswith("[PASS]")


def test_broken_knob_fails():
    res = checks.run_check(checks.BY_NAME["sampling"], "quick", checks.Knobs(C_h=0.0))
    assert not res.passed


def test_crashing_check_is_a_failure():
    boom = checks.Check("boom", lambda mode, knobs: 1 / 0, 1.0, "")
    res = checks.run_check(boom, "quick")
    assert not res.passed and "ZeroDivisionError" in res.detail
