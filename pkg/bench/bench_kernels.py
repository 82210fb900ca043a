"""Compiled kernels vs the numpy fallback.

    python3 bench/bench_kernels.py [--n 200000] [--d 32] [--k 8] [--repeats 7] [--out kernels.csv]

Prints one CSV row per (kernel, backend) with the best-of-repeats time and
the speedup of the compiled backend, after checking both agree.
"""

import argparse
import csv
import sys
import time

import numpy as np

from pnormreg import generators
from pnormreg.kernels import backends


def best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n, d, k, seed):
    rng = np.random.default_rng(seed)
    A = generators.random_rows_per_row(n, d, k, rng)
    ip, ix, dv = A.row_offsets, A.col_indices, A.values
    x = rng.standard_normal(d)
    y = rng.standard_normal(n)
    basis = rng.standard_normal((d, d))
    t = 10.0 ** rng.uniform(-1, 1, n)
    w = rng.uniform(0.5, 2.0, n)
    return {
        "csr_matvec": lambda m: m.csr_matvec(ip, ix, dv, x),
        "csr_rmatvec": lambda m: m.csr_rmatvec(ip, ix, dv, y, d),
        "csr_row_sqnorms": lambda m: m.csr_row_sqnorms(ip, ix, dv, basis),
        "gamma_values": lambda m: m.gamma_values(1.5, t, y),
        "gamma_sum": lambda m: m.gamma_sum(3.0, t, y, w),
        "gamma_grad": lambda m: m.gamma_grad(3.0, t, y),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--k", type=int, default=8, help="nonzeros per row")
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out")
    args = ap.parse_args(argv)

    mods = backends()
    if "compiled" not in mods:
        print("compiled backend not built; timing the fallback only", file=sys.stderr)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.writer(out)
    writer.writerow(["kernel", "backend", "n", "nnz", "seconds", "speedup", "max_abs_diff"])
    nnz = args.n * args.k
    for name, fn in cases(args.n, args.d, args.k, args.seed).items():
        ref = np.asarray(fn(mods["python"]))
        t_py = best_time(lambda: fn(mods["python"]), args.repeats)
        writer.writerow([name, "python", args.n, nnz, f"{t_py:.6g}", "1", "0"])
        if "compiled" in mods:
            got = np.asarray(fn(mods["compiled"]))
            diff = float(np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1.0)))
            t_c = best_time(lambda: fn(mods["compiled"]), args.repeats)
            writer.writerow([name, "compiled", args.n, nnz, f"{t_c:.6g}",
                             f"{t_py / t_c:.3g}", f"{diff:.3g}"])
    if args.out:
        out.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
