#!/usr/bin/env python3
"""Benchmark the compiled tree core against the pure-Python fallback.

Usage: python benchmarks/bench_treecore.py [--trees N] [--n N] [--k K]

Fits the same forest with both backends (verifying bitwise-equal output)
and reports trees/second and predictions/second for each.
"""

import argparse
import time

import numpy as np


def bench(core, X, y, rows, seeds, mtry, nodesize, XQ, repeat=3):
    best_fit = float("inf")
    arrs = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        arrs = core.fit_forest_arrays(X, y, rows, seeds, mtry, nodesize)
        best_fit = min(best_fit, time.perf_counter() - t0)
    args = [arrs[k] for k in ("feature", "threshold", "left", "right", "value", "offsets")]
    best_pred = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        core.predict_forest_arrays(*args, XQ)
        best_pred = min(best_pred, time.perf_counter() - t0)
    return arrs, best_fit, best_pred


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trees", type=int, default=500)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--k", type=int, default=100)
    ap.add_argument("--d", type=int, default=6)
    ap.add_argument("--mtry", type=int, default=3)
    ap.add_argument("--nodesize", type=int, default=10)
    ap.add_argument("--queries", type=int, default=50)
    args = ap.parse_args()

    gen = np.random.default_rng(0)
    X = gen.random((args.n, args.d))
    y = gen.standard_normal(args.n)
    rows = np.sort(
        np.argsort(gen.random((args.trees, args.n)), axis=1)[:, : args.k], axis=1
    ).astype(np.int64)
    seeds = gen.integers(0, 2**63, size=args.trees, dtype=np.uint64)
    XQ = gen.random((args.queries, args.d))

    import forestvar._treecore_py as pycore

    backends = [("python", pycore)]
    try:
        import forestvar._treecore as ccore

        backends.insert(0, ("compiled", ccore))
    except ImportError:
        print("# compiled backend not available; benchmarking fallback only")

    results = {}
    for name, core in backends:
        arrs, fit_s, pred_s = bench(
            core, X, y, rows, seeds, args.mtry, args.nodesize, XQ
        )
        results[name] = (arrs, fit_s, pred_s)
        print(
            f"{name:>9}: fit {args.trees / fit_s:10.0f} trees/s "
            f"({1e6 * fit_s / args.trees:7.1f} us/tree)   "
            f"predict {args.trees * args.queries / pred_s:12.0f} cell/s"
        )

    if len(results) == 2:
        a, b = results["compiled"][0], results["python"][0]
        same = all(np.array_equal(a[k], b[k]) for k in a)
        print(f"# outputs bitwise identical: {same}")
        print(
            f"# speedup: fit x{results['python'][1] / results['compiled'][1]:.0f}, "
            f"predict x{results['python'][2] / results['compiled'][2]:.0f}"
        )


if __name__ == "__main__":
    main()
