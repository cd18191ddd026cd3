"""Compare the compiled simplex kernel against the pure-numpy fallback.

Two measurements:

* the raw pivot loop on synthetic phase-1 tableaus of increasing size,
  run on identical inputs so the outputs can be checked bit for bit;
* estimate_joint end to end on a ten-optimization marginal set (1024
  atom columns), switching the kernel binding between timings.

Usage: python3 benchmarks/bench_simplex.py [--repeat N] [--seed S]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from hintfabric import _simplex_py, lp
from hintfabric.accounting import estimate_joint
from hintfabric.ids import OptimizationId as O

try:
    from hintfabric import _simplex
except ImportError:
    _simplex = None

# (constraint rows, real columns); artificials are added per row
SIZES = ((8, 32), (16, 128), (24, 512), (32, 1024))

TEN_OPT_MARGINALS = {
    O.MADC: 0.62,
    O.RIGHTSIZING: 0.40,
    O.OVERSUBSCRIPTION: 0.18,
    O.AUTO_SCALING: 0.11,
    O.NON_PRE_PROVISION: 0.71,
    O.REGION_AGNOSTIC: 0.47,
    O.UNDERCLOCKING: 0.15,
    O.OVERCLOCKING: 0.09,
    O.SPOT_VMS: 0.26,
    O.HARVEST_VMS: 0.07,
}


def phase1_instance(rng: np.random.Generator, m: int, n: int):
    """A feasible-by-construction phase-1 tableau with artificial basis."""
    a = rng.uniform(-1.0, 1.0, (m, n))
    b = a @ rng.uniform(0.0, 1.0, n)
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0
    tableau = np.zeros((m + 1, n + m + 1), dtype=np.float64)
    tableau[:m, :n] = a
    tableau[:m, n : n + m] = np.eye(m)
    tableau[:m, -1] = b
    tableau[m, :n] = -a.sum(axis=0)
    tableau[m, -1] = -b.sum()
    basis = np.arange(n, n + m, dtype=np.int64)
    return tableau, basis


def time_kernel(kernel, instances) -> tuple[float, list]:
    outputs = []
    start = time.perf_counter()
    for tableau, basis in instances:
        t = tableau.copy()
        bs = basis.copy()
        status = kernel.pivot_loop(t, bs, t.shape[1] - 1)
        outputs.append((status, t, bs))
    return time.perf_counter() - start, outputs


def bench_pivot_loop(repeat: int, seed: int) -> None:
    print(f"{'pivot loop':<24}{'compiled':>12}{'python':>12}{'speedup':>10}")
    mismatches = 0
    for m, n in SIZES:
        rng = np.random.default_rng(seed)
        instances = [phase1_instance(rng, m, n) for _ in range(10)]
        best_c = best_p = float("inf")
        for _ in range(repeat):
            took_c, out_c = time_kernel(_simplex, instances)
            took_p, out_p = time_kernel(_simplex_py, instances)
            best_c = min(best_c, took_c)
            best_p = min(best_p, took_p)
            for (sc, tc, bc), (sp, tp, bp) in zip(out_c, out_p):
                if sc != sp or not np.array_equal(tc, tp) or not np.array_equal(bc, bp):
                    mismatches += 1
        label = f"{m}x{n}"
        print(f"{label:<24}{best_c:>11.4f}s{best_p:>11.4f}s{best_p / best_c:>9.1f}x")
    if mismatches:
        print(f"PARITY FAILURE: {mismatches} instance runs diverged", file=sys.stderr)
        sys.exit(1)
    print("parity: identical statuses, tableaus and bases on every instance")


def bench_estimate_joint(repeat: int) -> None:
    print(f"\n{'estimate_joint':<24}{'compiled':>12}{'python':>12}{'speedup':>10}")
    saved = lp._kernel
    results = {}
    timings = {}
    try:
        for label, kernel in (("compiled", _simplex), ("python", _simplex_py)):
            lp._kernel = kernel
            best = float("inf")
            for _ in range(repeat):
                start = time.perf_counter()
                est = estimate_joint(TEN_OPT_MARGINALS)
                best = min(best, time.perf_counter() - start)
            timings[label] = best
            results[label] = (est.min_savings_pct, est.max_savings_pct)
    finally:
        lp._kernel = saved
    print(
        f"{'10 opts, 1024 atoms':<24}{timings['compiled']:>11.4f}s"
        f"{timings['python']:>11.4f}s{timings['python'] / timings['compiled']:>9.1f}x"
    )
    if results["compiled"] != results["python"]:
        print(f"PARITY FAILURE: bounds differ: {results}", file=sys.stderr)
        sys.exit(1)
    lo, hi = results["compiled"]
    print(f"parity: both kernels bound savings to [{lo:.6f}, {hi:.6f}]")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="best-of repetitions")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if _simplex is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    print(f"active kernel in this interpreter: {lp.KERNEL}")
    bench_pivot_loop(args.repeat, args.seed)
    bench_estimate_joint(args.repeat)
    return 0


if __name__ == "__main__":
    sys.exit(main())
