import csv
import io
import json

import numpy as np
import pytest

from pnormreg import cli, generators
from pnormreg.checks import strip_timing
from pnormreg.sparse import SparseMatrix, write_matrix_market, write_vector


@pytest.fixture
def files(tmp_path):
    prob = generators.regression_instance(64, 4, 3.0, seed=1)
    write_matrix_market(prob.A, tmp_path / "A.mtx")
    write_vector(prob.b, tmp_path / "b.txt")
    write_matrix_market(SparseMatrix.identity(5), tmp_path / "I.mtx")
    write_vector(np.arange(1.0, 6.0), tmp_path / "b5.txt")
    return tmp_path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_identity_solve(capsys, files):
    code, out, _ = run(capsys, "solve", "--p", 2, "--A", files / "I.mtx", "--b", files / "b5.txt")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == cli.SCHEMA_VERSION
    assert np.allclose(doc["report"]["x"], np.arange(1.0, 6.0))


def test_usage_errors(capsys, files):
    assert run(capsys, "solve", "--bogus")[0] == 2
    assert run(capsys)[0] == 2
    assert run(capsys, "solve", "--p", 3)[0] == 2
    assert run(capsys, "solve", "--p", 0.5, "--A", files / "A.mtx", "--b", files / "b.txt")[0] == 2
    code = run(capsys, "solve", "--p", 3, "--form", "p2", "--method", "homotopy",
               "--A", files / "A.mtx", "--b", files / "b.txt")[0]
    assert code == 2


def test_missing_file_is_failure(capsys, files):
    code, _, err = run(capsys, "solve", "--p", 3, "--A", files / "nope.mtx", "--b", files / "b.txt")
    assert code == 1 and err


def test_config_file_and_override(capsys, files):
    cfgfile = files / "run.cfg"
    cfgfile.write_text(f"# solver settings\np = 2\nA = {files / 'A.mtx'}\nb = {files / 'b.txt'}\n"
                       "seed = 4\n")
    code, out, _ = run(capsys, "solve", "--config", cfgfile)
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["p"] == 2.0 and doc["config"]["seed"] == 4
    code, out, _ = run(capsys, "solve", "--config", cfgfile, "--p", 3)
    assert code == 0 and json.loads(out)["config"]["p"] == 3.0
    bad = files / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert run(capsys, "solve", "--config", bad)[0] == 2
    bad.write_text("just words\n")
    assert run(capsys, "solve", "--config", bad)[0] == 2


def test_solve_trace_and_determinism(capsys, files):
    args = ["solve", "--p", 3, "--A", files / "A.mtx", "--b", files / "b.txt", "--seed", 9]
    code, out1, _ = run(capsys, *args, "--trace", files / "t.jsonl")
    assert code == 0
    events = [json.loads(line) for line in (files / "t.jsonl").read_text().splitlines()]
    assert events and all(isinstance(e, dict) for e in events)
    code, out2, _ = run(capsys, *args)
    a, b = json.loads(out1), json.loads(out2)
    a["config"].pop("trace")
    b["config"].pop("trace")
    assert strip_timing(a) == strip_timing(b)


def test_sparsify_leverage_gamma(capsys, files):
    code, out, _ = run(capsys, "sparsify", "--A", files / "A.mtx", "--certify", "yes",
                       "--out", files / "SA.mtx")
    assert code == 0 and (files / "SA.mtx").exists()
    assert json.loads(out)["mu_min"] >= 0.25
    code, out, _ = run(capsys, "leverage", "--A", files / "A.mtx")
    assert code == 0
    assert abs(sum(json.loads(out)["scores"]) - 4) <= 1e-9
    code, out, _ = run(capsys, "leverage", "--A", files / "A.mtx", "--method", "lewis", "--p", 4)
    assert code == 0 and json.loads(out)["residual"] <= 1e-8
    code, out, _ = run(capsys, "gamma-sample", "--A", files / "A.mtx", "--b", files / "b.txt",
                       "--p", 1.5, "--seed", 2)
    assert code == 0
    doc = json.loads(out)
    assert doc["schema_version"] == cli.SCHEMA_VERSION


def test_bench_csv(capsys, files):
    code, out, _ = run(capsys, "bench", "--sizes", "48x3", "--p-list", "3")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == cli.BENCH_COLUMNS
    assert len(rows) == 2
    rec = dict(zip(rows[0], rows[1]))
    assert rec["status"] == "ok" and float(rec["objective_gap"]) <= 1e-6


def test_bench_nnz_sweep(capsys, files):
    code, _, _ = run(capsys, "bench", "--sweep", "nnz", "--sizes", "2000x8", "--p-list", "3",
                     "--out", files / "sweep.csv", "--trace", files / "bench.jsonl")
    assert code == 0
    rows = list(csv.DictReader(open(files / "sweep.csv")))
    assert len(rows) >= 2
    assert all(r["time_ratio"] != "" for r in rows[1:])
    assert (files / "bench.jsonl").exists()


def test_verify_only_gamma(capsys, files):
    code, out, _ = run(capsys, "verify", "--only", "gamma", "--json", files / "v.json")
    assert code == 0
    assert "[PASS] gamma" in out
    doc = json.loads((files / "v.json").read_text())
    assert [r["name"] for r in doc["results"]] == ["gamma"]


def test_verify_broken_knob_fails(capsys):
    code, out, _ = run(capsys, "verify", "--only", "sampling", "--mode", "quick", "--C-h", 0)
    assert code == 1 and "[FAIL] sampling" in out


def test_verify_unknown_check(capsys):
    assert run(capsys, "verify", "--only", "nonsense")[0] == 2
