import numpy as np
import pytest
from hypothesis import settings

from pnormreg.sparse import SparseMatrix

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_sparse(rng, n, d, density=0.3):
    """(SparseMatrix, dense) pair with a unit diagonal so AᵀA is nonsingular."""
    D = rng.standard_normal((n, d)) * (rng.random((n, d)) < density)
    D[np.arange(min(n, d)), np.arange(min(n, d))] += 1.0
    return SparseMatrix.from_dense(D), D


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.LINES.values():
        terminalreporter.write_line(line)
