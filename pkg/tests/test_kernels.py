import numpy as np
import pytest

from pnormreg import BACKEND, generators
from pnormreg.kernels import backends

MODS = backends()


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(3)
    A = generators.random_rows_per_row(300, 12, 4, rng)
    return {
        "A": A,
        "x": rng.standard_normal(12),
        "y": rng.standard_normal(300) * 3,
        "basis": rng.standard_normal((12, 5)),
        "t": 10.0 ** rng.uniform(-1, 1, 300),
        "w": rng.uniform(0.5, 2.0, 300),
    }


def test_backend_name():
    assert BACKEND in MODS
    assert "python" in MODS


@pytest.mark.parametrize("name", sorted(MODS))
def test_kernels_match_dense(name, data):
    m = MODS[name]
    A = data["A"]
    D = A.to_dense()
    ip, ix, dv = A.row_offsets, A.col_indices, A.values
    assert np.allclose(m.csr_matvec(ip, ix, dv, data["x"]), D @ data["x"], atol=1e-12)
    assert np.allclose(m.csr_rmatvec(ip, ix, dv, data["y"], 12), D.T @ data["y"], atol=1e-12)
    assert np.allclose(m.csr_row_sqnorms(ip, ix, dv, data["basis"]),
                       ((D @ data["basis"]) ** 2).sum(axis=1), atol=1e-12)


@pytest.mark.parametrize("p", [1.25, 2.0, 3.5])
def test_gamma_kernels_agree(p, data):
    ref = MODS["python"]
    t, y, w = data["t"], data["y"], data["w"]
    for m in MODS.values():
        assert np.allclose(m.gamma_values(p, t, y), ref.gamma_values(p, t, y), rtol=1e-13)
        assert np.isclose(m.gamma_sum(p, t, y, w), ref.gamma_sum(p, t, y, w), rtol=1e-13)
        assert np.allclose(m.gamma_grad(p, t, y), ref.gamma_grad(p, t, y), rtol=1e-13)


def test_pure_python_switch():
    import os
    import subprocess
    import sys
    env = dict(os.environ, PNORM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import pnormreg; print(pnormreg.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
