"""Command-line interface.

    pnormreg solve        --A A.mtx --b b.txt --p 3 [--form p1|p2] [--C C.mtx --v v.txt]
    pnormreg sparsify     --A A.mtx [--out SA.mtx] [--certify]
    pnormreg leverage     --A A.mtx [--method exact|jl|lewis] [--p 4]
    pnormreg gamma-sample --A A.mtx --t t.txt --p 1.5
    pnormreg bench        [--sizes 256x8,512x16] [--p-list 1.5,3] [--sweep nnz] [--out bench.csv]
    pnormreg verify       [--only gamma,spectral] [--mode quick|full]

Every subcommand accepts --config FILE, a flat file of ``key = value``
lines ('#' starts a comment). Keys are the long flag names without the
leading dashes, with '-' or '_' interchangeable; flags given on the
command line override the file. Example:

    p = 3
    eps = 1e-8
    form = p1
    seed = 7
    C-h = 0.03

Exit codes: 0 success, 1 solve or verification failure, 2 usage error.
All randomness flows from --seed. PNORM_THREADS caps BLAS threads and
bench worker processes.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, checks, generators
from .errors import PNormError
from .gamma import DEFAULT_C_H, gamma_sample
from .kernels import BACKEND
from .leverage import (SpectralConfig, estimate_leverage_jl, jl_rows, leverage_scores_exact,
                       lewis_weights, spectral_approximation, spectral_bounds)
from .linsolve import build_inverse_operator
from .oracle import MAX_D, MAX_N, pnorm_oracle
from .pnorm import FORMS, METHODS, RESIDUAL_SOLVERS, RegressionProblem, SolveConfig, solve
from .residual import MWUConfig
from .sparse import SeededRng, read_matrix_market, read_vector, write_matrix_market

SCHEMA_VERSION = "1.0"
BENCH_COLUMNS = ("instance", "method", "nnz", "n", "d", "p", "iterations", "seconds",
                 "objective_gap", "seconds_per_iteration", "time_ratio", "status")

log = logging.getLogger("pnormreg")


class UsageError(Exception):
    """Bad flags, config keys or option values; exit code 2."""


# config ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    seed: int = 0
    p: float = 2.0
    eps: float = 1e-8
    form: str = "p1"
    method: str = "dual-auto"
    residual_solver: str = "auto"
    sampled: bool = False
    C_h: float = DEFAULT_C_H
    mwu_C: float = 1.0
    spectral_c: float = 30.0
    m_knob: float = 1.0
    rebuild_period: float | None = None
    max_outer: int = 300
    A: str | None = None
    b: str | None = None
    C: str | None = None
    v: str | None = None
    trace: str | None = None

    KNOBS = ("C_h", "mwu_C", "spectral_c", "m_knob", "rebuild_period", "max_outer")

    def validate(self, need_problem=True):
        problems = []
        if not self.p > 1 or not math.isfinite(self.p):
            problems.append("--p must be a finite number > 1")
        if not self.eps > 0:
            problems.append("--eps must be positive")
        if self.form not in FORMS:
            problems.append(f"--form must be one of {FORMS}")
        if self.method not in METHODS:
            problems.append(f"--method must be one of {METHODS}")
        if self.residual_solver not in RESIDUAL_SOLVERS:
            problems.append(f"--residual-solver must be one of {RESIDUAL_SOLVERS}")
        for k in self.KNOBS:
            v = getattr(self, k)
            if v is not None and not v > 0:
                problems.append(f"knob {k} must be positive (got {v})")
        if self.method == "homotopy" and (self.form != "p1" or self.C is not None):
            problems.append("--method homotopy needs --form p1 without --C")
        if (self.C is None) != (self.v is None):
            problems.append("--C and --v must be given together")
        if self.form == "p2" and self.C is not None:
            problems.append("--form p2 takes no --C/--v")
        if need_problem and (self.A is None or self.b is None):
            problems.append("--A and --b are required")
        if problems:
            raise UsageError("; ".join(problems))
        return self

    def solve_config(self, trace=None):
        mwu = MWUConfig(C=self.mwu_C, m_knob=self.m_knob, rebuild_period=self.rebuild_period)
        return SolveConfig(method=self.method, residual_solver=self.residual_solver,
                           sampled=self.sampled, max_outer=self.max_outer, mwu=mwu,
                           C_h=self.C_h, spectral_c=self.spectral_c, seed=self.seed, trace=trace)

    def knobs(self):
        return checks.Knobs(C_h=self.C_h, C=self.mwu_C, c=self.spectral_c, m_knob=self.m_knob,
                            rebuild_period=self.rebuild_period, seed=self.seed)


def _bool(s):
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {s!r}")


def read_config(path):
    """Parse a flat key=value file into {normalized_key: raw string}."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in s.split("=", 1))
        if not key:
            raise UsageError(f"{path}:{lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out


def merge_config(parser, args, defaults):
    """defaults < config file < explicit flags. Returns a dict of final values."""
    explicit = {k: v for k, v in vars(args).items() if v is not None}
    values = dict(defaults)
    if args.config:
        actions = {a.dest: a for a in parser._actions}
        for key, raw in read_config(args.config).items():
            action = actions.get(key)
            if action is None or key in ("config", "help", "command"):
                raise UsageError(f"unknown config key {key!r}")
            conv = action.type or str
            try:
                values[key] = conv(raw)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
            if action.choices is not None and values[key] not in action.choices:
                raise UsageError(f"config key {key!r} must be one of {list(action.choices)}")
    values.update(explicit)
    values.pop("config", None)
    values.pop("command", None)
    return values


def _run_config(values):
    fields = RunConfig.__dataclass_fields__
    return RunConfig(**{k: v for k, v in values.items() if k in fields})


# output helpers ---------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def emit(payload, stream=None):
    doc = {"schema_version": SCHEMA_VERSION, "version": __version__, "backend": BACKEND}
    doc.update(payload)
    (stream or sys.stdout).write(json.dumps(_clean(doc), sort_keys=True) + "\n")


class TraceWriter:
    """JSON-lines sink; a no-op when no path is given."""

    def __init__(self, path):
        self.fh = open(path, "w") if path else None

    def __call__(self, event):
        if self.fh is not None:
            self.fh.write(json.dumps(_clean(event), sort_keys=True) + "\n")

    def close(self):
        if self.fh is not None:
            self.fh.close()

    @property
    def callback(self):
        return self if self.fh is not None else None


def load_problem(cfg):
    A = read_matrix_market(cfg.A)
    b = read_vector(cfg.b)
    C = read_matrix_market(cfg.C) if cfg.C else None
    v = read_vector(cfg.v) if cfg.v else None
    return RegressionProblem(A, b, C, v, p=cfg.p, form=cfg.form)


# subcommands ------------------------------------------------------------------------


def cmd_solve(cfg):
    cfg.validate()
    prob = load_problem(cfg)
    trace = TraceWriter(cfg.trace)
    try:
        report = solve(prob, cfg.eps, cfg.solve_config(trace.callback))
    finally:
        trace.close()
    emit({"command": "solve", "config": asdict(cfg), "report": report.to_json()})
    if not report.converged:
        print(f"error: solver did not reach the target gap (gap {report.gap:.3g})",
              file=sys.stderr)
        return 1
    return 0


def cmd_sparsify(cfg, out=None, certify=False):
    A = read_matrix_market(cfg.A)
    res = spectral_approximation(A, SeededRng(cfg.seed), SpectralConfig(c=cfg.spectral_c))
    payload = {"command": "sparsify", "n": A.n_rows, "d": A.n_cols, "rows": res.At.n_rows,
               "rounds": res.rounds, "retries": res.retries, "u_sum_history": res.history,
               "sample": res.sample.to_json()}
    if certify:
        lo, hi = spectral_bounds(A, res.At)
        payload["mu_min"], payload["mu_max"] = lo, hi
    if out:
        write_matrix_market(res.At, out)
        payload["out"] = out
    emit(payload)
    return 0


def cmd_leverage(cfg, kind="exact"):
    A = read_matrix_market(cfg.A)
    if kind == "exact":
        est = leverage_scores_exact(A)
        payload = {"scores": est.values, "rank_deficient": est.rank_deficient}
    elif kind == "jl":
        inv = build_inverse_operator(A)
        est = estimate_leverage_jl(A, A, inv, jl_rows(*A.shape), SeededRng(cfg.seed))
        payload = {"scores": est.values, "overestimate": True}
    else:
        res = lewis_weights(A, cfg.p)
        payload = {"weights": res.weights, "residual": res.residual,
                   "iterations": res.iterations, "floored": res.floored}
        est = None
    if est is not None:
        payload["sum"] = est.sum
    emit({"command": "leverage", "method": kind, "n": A.n_rows, "d": A.n_cols, **payload})
    return 0


def cmd_gamma_sample(cfg, t_path=None, h=None):
    A = read_matrix_market(cfg.A)
    src = t_path or cfg.b
    if src is None:
        raise UsageError("gamma-sample needs --t (or --b) with one threshold per row")
    t = np.abs(read_vector(src))
    if t_path is None:
        # thresholds from a residual vector: rescale so min t = 1
        positive = t[t > 0]
        t = np.maximum(t / (positive.min() if positive.size else 1.0), 1.0)
    res = gamma_sample(A, t, cfg.p, h=h, rng=SeededRng(cfg.seed), C_h=cfg.C_h)
    emit({"command": "gamma-sample", "q": cfg.p, "n": A.n_rows, "d": A.n_cols,
          "empty": res.empty, **res.to_json()})
    return 1 if res.empty else 0


# bench ------------------------------------------------------------------------------


def _parse_sizes(spec):
    out = []
    for part in spec.split(","):
        try:
            n, d = (int(v) for v in part.lower().split("x"))
        except ValueError:
            raise UsageError(f"bad size {part!r}; expected NxD") from None
        out.append((n, d))
    return out


def _parse_floats(spec):
    try:
        return [float(v) for v in str(spec).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad number list {spec!r}") from None


def bench_instances(args, cfg):
    """(name, problem-builder arguments) for the requested sweep."""
    ps = _parse_floats(args.p_list)
    out = []
    if args.corpus:
        files = sorted(Path(args.corpus).glob("*.mtx"))
        if not files:
            raise UsageError(f"no .mtx files in {args.corpus}")
        for f in files:
            for p in ps:
                out.append({"name": f.stem, "path": str(f), "p": p})
    elif args.sweep == "nnz":
        n, d = _parse_sizes(args.sizes or "4000x32")[0]
        for k in (2, 4, 8, 16):
            if k > d:
                break
            for p in ps:
                out.append({"name": f"nnz-sweep-{n}x{d}-k{k}", "n": n, "d": d, "per_row": k,
                            "p": p, "sweep": f"{n}x{d}-p{p:g}"})
    else:
        for n, d in _parse_sizes(args.sizes or "256x8"):
            for p in ps:
                out.append({"name": f"{args.kind}-{n}x{d}", "n": n, "d": d, "p": p})
    for inst in out:
        inst.update(form=cfg.form, seed=cfg.seed, eps=cfg.eps, kind=args.kind)
    return out


def _build(inst):
    rng = np.random.default_rng(inst["seed"])
    if "path" in inst:
        A = read_matrix_market(inst["path"])
        b_path = Path(inst["path"]).with_suffix(".b.txt")
        n, d = A.shape
        if b_path.exists():
            b = read_vector(b_path)
        else:
            b = rng.standard_normal(n) if inst["form"] == "p1" else A.rmatvec(
                rng.standard_normal(n))
        return RegressionProblem(A, b, p=inst["p"], form=inst["form"])
    if "per_row" in inst:
        A = generators.random_rows_per_row(inst["n"], inst["d"], inst["per_row"], rng)
        b = rng.standard_normal(inst["n"]) if inst["form"] == "p1" else A.rmatvec(
            rng.standard_normal(inst["n"]))
        return RegressionProblem(A, b, p=inst["p"], form=inst["form"])
    return generators.regression_instance(inst["n"], inst["d"], inst["p"], inst["form"],
                                          inst["kind"], rng)


def run_bench_instance(inst, method, solve_kwargs):
    """One CSV row plus its trace events. Never raises."""
    events = []
    row = {"instance": inst["name"], "method": method, "p": inst["p"], "status": "ok"}
    try:
        prob = _build(inst)
        row.update(nnz=prob.A.nnz, n=prob.n, d=prob.d)
        cfg = SolveConfig(method=method, seed=inst["seed"],
                          trace=lambda e: events.append({"instance": inst["name"],
                                                         "method": method, **e}),
                          **solve_kwargs)
        t0 = time.perf_counter()
        rep = solve(prob, inst["eps"], cfg)
        secs = time.perf_counter() - t0
        if prob.n <= MAX_N and prob.d <= MAX_D:
            ref = pnorm_oracle(prob.A, prob.b, p=prob.p, form=prob.form)
            gap = (rep.objective - ref.value) / ref.value if ref.value > 0 else 0.0
        else:
            gap = rep.gap
        row.update(iterations=rep.iterations, seconds=secs, objective_gap=gap,
                   seconds_per_iteration=secs / max(rep.iterations, 1))
        if not rep.converged:
            row["status"] = "not-converged"
    except Exception as exc:  # noqa: BLE001 - failures become rows
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    return row, events


def cmd_bench(args, cfg):
    instances = bench_instances(args, cfg)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UsageError(f"unknown method(s) {bad}; expected {METHODS}")
    solve_kwargs = {"C_h": cfg.C_h, "spectral_c": cfg.spectral_c, "max_outer": cfg.max_outer,
                    "mwu": MWUConfig(C=cfg.mwu_C, m_knob=cfg.m_knob,
                                     rebuild_period=cfg.rebuild_period)}
    jobs = max(1, args.jobs)
    cap = os.environ.get("PNORM_THREADS")
    if cap:
        try:
            jobs = min(jobs, max(1, int(cap)))
        except ValueError:
            raise UsageError(f"PNORM_THREADS must be an integer, got {cap!r}") from None
    tasks = [(inst, m) for inst in instances for m in methods
             if not (m == "homotopy" and inst["form"] != "p1")]
    if jobs == 1:
        results = [run_bench_instance(inst, m, solve_kwargs) for inst, m in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(run_bench_instance, inst, m, solve_kwargs) for inst, m in tasks]
            results = [f.result() for f in futs]

    # per-iteration time relative to the previous point of the same nnz sweep
    last = {}
    for (inst, m), (row, _) in zip(tasks, results):
        key = (inst.get("sweep"), m)
        spi = row.get("seconds_per_iteration")
        if inst.get("sweep") and spi:
            if key in last:
                row["time_ratio"] = spi / last[key]
            last[key] = spi

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    trace = TraceWriter(cfg.trace)
    try:
        writer = csv.DictWriter(out, fieldnames=BENCH_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row, events in results:
            writer.writerow({k: _fmt_cell(row.get(k)) for k in BENCH_COLUMNS})
            for e in events:
                trace(e)
    finally:
        trace.close()
        if args.out:
            out.close()
    return 0


def _fmt_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


# verify -----------------------------------------------------------------------------


def cmd_verify(args, cfg):
    try:
        selected = checks.select(args.only and [args.only])
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    print(f"pnormreg verify: {len(selected)} check(s), mode={args.mode}, backend={BACKEND}")

    results = []
    for check in selected:
        log.info("running %s", check.name)
        res = checks.run_check(check, args.mode, cfg.knobs())
        print(res.line(), flush=True)
        results.append(res)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} passed"
          + (f"; failed: {', '.join(failed)}" if failed else ""))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(_clean({"schema_version": SCHEMA_VERSION, "command": "verify",
                              "mode": args.mode, "knobs": asdict(cfg.knobs()),
                              "results": [r.to_json() for r in results]}), fh, indent=1)
    return 1 if failed else 0


# parser -----------------------------------------------------------------------------


def _common(sp, problem=True):
    """Flags shared by every subcommand. Defaults are None so that config
    files can fill in anything the command line leaves out."""
    sp.add_argument("--config", metavar="FILE", help="flat key=value file; flags override it")
    sp.add_argument("--seed", type=int, help="seed for every random choice (default 0)")
    sp.add_argument("--p", type=float, help="norm exponent p > 1 (default 2)")
    sp.add_argument("--A", metavar="MTX", help="matrix in Matrix Market coordinate format")
    sp.add_argument("--trace", metavar="FILE", help="write JSON-lines trace events here")
    sp.add_argument("--C-h", dest="C_h", type=float,
                    help=f"γ-sampler oversampling constant (default {DEFAULT_C_H})")
    sp.add_argument("--mwu-C", dest="mwu_C", type=float,
                    help="shared leading constant of the MWU schedule (default 1)")
    sp.add_argument("--spectral-c", dest="spectral_c", type=float,
                    help="row-sampling constant c (default 30)")
    sp.add_argument("--m-knob", dest="m_knob", type=float,
                    help="inverse rebuild knob m (default 1)")
    sp.add_argument("--rebuild-period", dest="rebuild_period", type=float,
                    help="fixed inverse rebuild period (default derived from n, p, m)")
    sp.add_argument("-v", "--verbose", action="count", default=0)
    if problem:
        sp.add_argument("--b", metavar="VEC", help="right-hand side, one number per line")
        sp.add_argument("--C", metavar="MTX", help="constraint matrix for Cx = v (P1)")
        sp.add_argument("--v", metavar="VEC", help="constraint right-hand side")
        sp.add_argument("--eps", type=float, help="target relative gap (default 1e-8)")
        sp.add_argument("--form", choices=FORMS,
                        help="p1: min ‖Ax−b‖_p^p; p2: min ‖x‖_p^p s.t. Aᵀx = b")
        sp.add_argument("--max-outer", dest="max_outer", type=int,
                        help="outer iteration cap (default 300)")


def build_parser():
    parser = argparse.ArgumentParser(prog="pnormreg", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"pnormreg {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    sp = sub.add_parser("solve", help="solve a p-norm regression problem")
    _common(sp)
    sp.add_argument("--method", choices=METHODS, help="outer method (default dual-auto)")
    sp.add_argument("--residual-solver", dest="residual_solver", choices=RESIDUAL_SOLVERS,
                    help="residual-problem solver (default auto)")
    sp.add_argument("--sampled", type=_bool, metavar="BOOL",
                    help="solve residual problems on a γ-sample (p ≤ 2, P1)")

    sp = sub.add_parser("sparsify", help="spectral approximation by leverage-score sampling")
    _common(sp, problem=False)
    sp.add_argument("--out", metavar="MTX", help="write the sampled, rescaled rows here")
    sp.add_argument("--certify", type=_bool, metavar="BOOL",
                    help="also report the generalized eigenvalue range")

    sp = sub.add_parser("leverage", help="leverage scores or Lewis weights")
    _common(sp, problem=False)
    sp.add_argument("--method", choices=("exact", "jl", "lewis"),
                    help="exact scores, JL overestimates, or ℓ_p Lewis weights (needs p ≥ 2)")

    sp = sub.add_parser("gamma-sample", help="γ_q-preserving row sample")
    _common(sp, problem=False)
    sp.add_argument("--t", metavar="VEC", help="thresholds ≥ 1, one per row")
    sp.add_argument("--b", metavar="VEC", help="residual vector; thresholds |b| rescaled to ≥ 1")
    sp.add_argument("--h", type=float, help="oversampling h (default C_h·d·ln n)")

    sp = sub.add_parser("bench", help="benchmark sweep, CSV on stdout or --out")
    _common(sp, problem=False)
    sp.set_defaults(p=None)
    sp.add_argument("--p-list", dest="p_list", metavar="P1,P2", help="exponents (default 1.5,3)")
    sp.add_argument("--sizes", metavar="NxD,...", help="instance sizes (default 256x8)")
    sp.add_argument("--kind", choices=generators.KINDS, help="generator (default sparse)")
    sp.add_argument("--corpus", metavar="DIR", help="directory of .mtx files instead")
    sp.add_argument("--sweep", choices=("sizes", "nnz"), help="nnz: double nnz at fixed n, d")
    sp.add_argument("--methods", metavar="M1,M2", help="methods to run (default dual-auto)")
    sp.add_argument("--form", choices=FORMS)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--jobs", type=int, help="worker processes (capped by PNORM_THREADS)")
    sp.add_argument("--out", metavar="CSV", help="CSV path (default stdout)")

    sp = sub.add_parser("verify", help="run the invariant/acceptance suite")
    _common(sp, problem=False)
    sp.add_argument("--only", metavar="NAMES",
                    help="comma-separated subset of: " + ", ".join(c.name for c in checks.CHECKS))
    sp.add_argument("--mode", choices=checks.MODES, help="full (default) or quick")
    sp.add_argument("--json", metavar="FILE", help="also write results as JSON")
    return parser


BENCH_DEFAULTS = {"p_list": "1.5,3", "kind": "sparse", "sweep": "sizes", "methods": "dual-auto",
                  "jobs": 1, "corpus": None, "sizes": None, "out": None}
VERIFY_DEFAULTS = {"only": None, "mode": "full", "json": None}


def _configure_logging(verbose):
    level = logging.WARNING - 10 * min(verbose or 0, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging(getattr(args, "verbose", 0))
    sub = parser._subparsers._group_actions[0].choices[args.command]
    try:
        defaults = asdict(RunConfig())
        if args.command == "bench":
            defaults.update(BENCH_DEFAULTS, form="p1", eps=1e-8, p=None)
        elif args.command == "verify":
            defaults.update(VERIFY_DEFAULTS)
        elif args.command == "sparsify":
            defaults.update(out=None, certify=False)
        elif args.command == "leverage":
            defaults.update(method="exact")
        elif args.command == "gamma-sample":
            defaults.update(t=None, h=None, p=1.5)
        values = merge_config(sub, args, defaults)
        values.pop("verbose", None)
        if args.command == "bench" and values.get("p") is not None:
            values["p_list"] = str(values["p"])
        ns = argparse.Namespace(**values)
        if args.command in ("leverage", "bench"):
            values = {k: v for k, v in values.items() if k not in ("method", "p")}
        cfg = _run_config(values)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "verify":
            # knobs are deliberately not validated here: a bad knob must
            # surface as failing checks, not as a usage error
            return cmd_verify(ns, cfg)
        cfg.validate(need_problem=False)
        if args.command != "bench" and cfg.A is None:
            raise UsageError("--A is required")
        if args.command == "sparsify":
            return cmd_sparsify(cfg, ns.out, ns.certify)
        if args.command == "leverage":
            if ns.method == "lewis":
                cfg.p = ns.p if ns.p is not None else 4.0
            return cmd_leverage(cfg, ns.method)
        if args.command == "gamma-sample":
            return cmd_gamma_sample(cfg, ns.t, ns.h)
        return cmd_bench(ns, cfg)
    except UsageError as exc:
        print(f"pnormreg {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (PNormError, OSError, ValueError) as exc:
        print(f"pnormreg {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
