"""Command-line interface: simulate, predict, oracle-check."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ForestConfig
from .data import TargetPoint
from .harness import (
    ExperimentConfig,
    get_model,
    resolve_targets,
    run_experiment,
)
from .oracle import identity_checks
from .rng import RandomStream
from .tabular import (
    load_schema,
    predict_with_intervals,
    read_csv,
    read_targets_csv,
    write_reports_csv,
)
from .tree import active_backend


def _add_forest_args(p, with_model=False):
    if with_model:
        p.add_argument("--model", choices=("mars", "mlr"), required=True)
        p.add_argument("--n", type=int, required=True, help="training sample size")
    p.add_argument("--k", type=int, required=True, help="subsample size per tree")
    p.add_argument("--m", type=int, default=2, help="subsets per matched group")
    p.add_argument("--b", type=int, default=1000, help="number of matched groups")
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--nodesize", type=int, default=None)
    p.add_argument("--alpha", type=float, default=0.10, help="CI miscoverage level")
    p.add_argument("--smooth", type=int, default=0, metavar="N",
                   help="neighbors for the locally smoothed estimator (0 = off)")
    p.add_argument("--smooth-refit", action="store_true",
                   help="refit the forest for every smoothing neighbor")
    p.add_argument("--seed", type=int, default=0)


def _cmd_simulate(args) -> int:
    model = get_model(args.model)
    root = RandomStream(args.seed)
    targets = resolve_targets(args.targets, model.dimension, root)
    cfg = ExperimentConfig(
        model=model,
        n=args.n,
        k=args.k,
        M=args.m,
        B=args.b,
        mtry=args.mtry,
        nodesize=args.nodesize,
        n_mc=args.nmc,
        n_truth=args.ntruth,
        targets=targets,
        seed=args.seed,
        alpha=args.alpha,
        smooth_n=args.smooth,
        smooth_refit=args.smooth_refit,
    )
    evals = run_experiment(cfg, out_dir=args.out, n_jobs=args.jobs)
    print(f"# backend: {active_backend()}; wrote {args.out}/results.csv")
    hdr = f"{'target':>6} {'mode':>8} {'truth_var':>12} {'rel_bias':>9} {'coverage':>9}"
    print(hdr)
    for e in evals:
        rb = "   n/a" if e.relative_bias is None else f"{100 * e.relative_bias:6.1f}%"
        print(
            f"{e.target_id:>6} {e.mode:>8} {e.truth_var:12.6g} {rb:>9} "
            f"{100 * e.coverage:8.1f}%"
        )
    return 0


def _cmd_predict(args) -> int:
    table = read_csv(args.train, load_schema(args.schema))
    targets = read_targets_csv(args.targets, table)
    cfg = ForestConfig(
        k=args.k,
        M=args.m,
        B=args.b,
        mtry=args.mtry,
        nodesize=args.nodesize,
        seed=args.seed,
        smoothing_neighbors=args.smooth,
        alpha=args.alpha,
    )
    rs = RandomStream(args.seed)
    reports = predict_with_intervals(
        table.dataset, cfg, targets, rs, smooth_n=args.smooth,
        smooth_refit=args.smooth_refit,
    )
    write_reports_csv(args.out, reports)
    print(f"# wrote {args.out} ({len(reports)} rows)")
    return 0


def _cmd_oracle_check(args) -> int:
    results = identity_checks(max_n=args.max_n)
    print(f"1..{len(results)}")
    failed = 0
    for i, (name, ok, detail) in enumerate(results, start=1):
        status = "ok" if ok else "not ok"
        print(f"{status} {i} - {name}")
        if detail:
            print(f"# {detail}")
        failed += 0 if ok else 1
    return 0 if failed == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="forestvar",
        description="Variance estimates and confidence intervals for "
        "subbagged ensemble predictions.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="bias/coverage study on synthetic data")
    _add_forest_args(sim, with_model=True)
    sim.add_argument("--nmc", type=int, default=300, help="evaluation replications")
    sim.add_argument("--ntruth", type=int, default=2000,
                     help="ground-truth replications")
    sim.add_argument("--targets", default="random:10",
                     help="random:<count>, center, or file:<csv path>")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--jobs", type=int, default=1, help="worker processes")
    sim.set_defaults(func=_cmd_simulate)

    pred = sub.add_parser("predict", help="CSV predictions with intervals")
    pred.add_argument("--train", required=True, help="training CSV")
    pred.add_argument("--schema", required=True, help="schema JSON")
    pred.add_argument("--targets", required=True, help="targets CSV")
    _add_forest_args(pred)
    pred.add_argument("--out", required=True, help="output CSV")
    pred.set_defaults(func=_cmd_predict)

    oc = sub.add_parser("oracle-check", help="TAP report of exact identities")
    oc.add_argument("--max-n", type=int, default=24)
    oc.set_defaults(func=_cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
