"""Simulation harness: data generators, ground truth, bias/coverage studies.

An experiment is a pure function of its config.  Stream layout (all under
``RandomStream(cfg.seed)``):

* ``[9]``            random target points
* ``[4, j]``         ground-truth replication j
* ``[5, r]``         evaluation replication r
* within a replication: ``[10]`` data generation, ``[11]`` the fit pipeline
  (which internally uses ``[0, b]`` for sampling, ``[1, b, i]`` per tree and
  ``[2, q]`` for per-target smoothing neighbors).

Every emitted row carries its replication id and stream key, and
``run_replication`` reproduces any single replication bitwise in isolation.

Coverage is always evaluated against the Monte-Carlo mean of the ensemble
prediction (not the regression function), so model bias does not leak into
the interval calibration numbers.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import ForestConfig
from .data import Dataset, TargetPoint
from .errors import ForestVarError
from .forest import PredictionMatrix, fit_forest, predict_all
from .kernels import MeanKernel
from .rng import RandomStream
from .sampling import sample_bootstrap_plan, sample_matched_groups, sample_subset_plan
from .variance import (
    VarianceReport,
    bootstrap_variance_estimate,
    matched_variance_estimate,
    normal_quantile,
    smoothed_variance_estimate,
)

_TARGETS_PATH = 9
_TRUTH_PATH = 4
_MC_PATH = 5
_DATA_PATH = 10
_PIPE_PATH = 11
_SMOOTH_PATH = 2


def _g_mars(X):
    return (
        10.0 * np.sin(np.pi * X[:, 0] * X[:, 1])
        + 20.0 * (X[:, 2] - 0.05) ** 2
        + 10.0 * X[:, 3]
        + 5.0 * X[:, 4]
    )


def _g_mlr(X):
    return 2.0 * X[:, 0] + 3.0 * X[:, 1] - 5.0 * X[:, 2] - X[:, 3] + 1.0


def _g_constant(X):
    return np.zeros(X.shape[0])


# "constant" is a test seam: with noise = 0 it produces a degenerate ground
# truth (zero variance), exercising the flagged-row path of the harness.
_MODELS = {"mars": (6, _g_mars), "mlr": (6, _g_mlr), "constant": (2, _g_constant)}


@dataclass(frozen=True)
class SimModel:
    """A synthetic regression surface on [0, 1]^d with additive noise."""

    name: str
    dimension: int
    noise: float = 1.0

    def g(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return _MODELS[self.name][1](X)


def get_model(name: str, noise: float = 1.0) -> SimModel:
    key = name.lower()
    if key not in _MODELS:
        raise ForestVarError(f"unknown model {name!r}; choose from {sorted(_MODELS)}")
    return SimModel(name=key, dimension=_MODELS[key][0], noise=noise)


def generate(model: SimModel, n: int, rs: RandomStream) -> Dataset:
    """n rows with x ~ U[0,1]^d i.i.d. and y = g(x) + noise * N(0,1)."""
    gen = rs.generator()
    X = gen.random((n, model.dimension))
    eps = gen.standard_normal(n)
    y = model.g(X) + model.noise * eps
    return Dataset(features=X, response=y)


def resolve_targets(spec, d: int, rs: RandomStream) -> tuple:
    """Target list from "center", "random:<count>", "file:<path>" or a sequence."""
    if isinstance(spec, str):
        if spec == "center":
            return ((0.5,) * d,)
        if spec.startswith("random:"):
            count = int(spec.split(":", 1)[1])
            pts = rs.split([_TARGETS_PATH]).generator().random((count, d))
            return tuple(tuple(row) for row in pts)
        if spec.startswith("file:"):
            path = spec.split(":", 1)[1]
            pts = np.loadtxt(path, delimiter=",", ndmin=2)
            if pts.shape[1] != d:
                raise ForestVarError(
                    f"targets file has {pts.shape[1]} columns, expected d={d}"
                )
            return tuple(tuple(row) for row in pts)
        raise ForestVarError(f"unrecognized target spec {spec!r}")
    return tuple(tuple(float(c) for c in row) for row in spec)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a bias/coverage experiment depends on."""

    model: SimModel
    n: int
    k: int
    M: int = 2
    B: int = 1000
    mtry: Optional[int] = None
    nodesize: Optional[int] = None
    n_mc: int = 300
    n_truth: int = 2000
    targets: tuple = ()
    seed: int = 0
    alpha: float = 0.10
    smooth_n: int = 0
    smooth_refit: bool = False
    kernel: str = "tree"  # "tree" | "mean" (analytic test seam)

    def __post_init__(self):
        if self.n_mc < 1 or self.n_truth < 1:
            raise ForestVarError("n_mc and n_truth must both be >= 1")
        if self.kernel not in ("tree", "mean"):
            raise ForestVarError(f"unknown kernel seam {self.kernel!r}")

    def forest_config(self) -> ForestConfig:
        return ForestConfig(
            k=self.k,
            M=self.M,
            B=self.B,
            mtry=self.mtry,
            nodesize=self.nodesize,
            seed=self.seed,
            smoothing_neighbors=self.smooth_n,
            alpha=self.alpha,
        )


def replication_stream(cfg: ExperimentConfig, rep: int, kind: str) -> RandomStream:
    code = _TRUTH_PATH if kind == "truth" else _MC_PATH
    return RandomStream(cfg.seed).split([code, rep])


def run_replication(cfg: ExperimentConfig, rep: int, kind: str = "mc") -> dict:
    """One full replication: fresh data, plan, forest, estimates per target.

    Deterministic given (cfg, rep, kind); this is the unit the work pool
    distributes and the unit the seed ledger lets you re-run in isolation.
    """
    rs = replication_stream(cfg, rep, kind)
    data = generate(cfg.model, cfg.n, rs.split([_DATA_PATH]))
    pipe = rs.split([_PIPE_PATH])
    plan = sample_matched_groups(cfg.n, cfg.k, cfg.M, cfg.B, pipe)
    kern = MeanKernel() if cfg.kernel == "mean" else None
    forest = fit_forest(data, plan, cfg.forest_config(), pipe, kernel=kern)
    targets = [TargetPoint(np.asarray(t)) for t in cfg.targets]
    mats = predict_all(forest, targets)
    points = mats.mean(axis=(1, 2))
    out = {"rep": rep, "kind": kind, "points": points, "seed_key": rs.key64()}
    if kind == "truth":
        return out
    reports = []
    smoothed = []
    for q in range(len(targets)):
        pm = PredictionMatrix(values=mats[q], target=targets[q].coordinates)
        reports.append(matched_variance_estimate(pm, cfg.alpha))
        if cfg.smooth_n > 0:
            smoothed.append(
                smoothed_variance_estimate(
                    forest,
                    targets[q],
                    data,
                    cfg.smooth_n,
                    pipe.split([_SMOOTH_PATH, q]),
                    cfg.alpha,
                    refit=cfg.smooth_refit,
                )
            )
    out["reports"] = reports
    out["smoothed"] = smoothed if cfg.smooth_n > 0 else None
    return out


def _pool_map(fn, args_list, n_jobs):
    if n_jobs <= 1 or len(args_list) <= 1:
        return [fn(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, args_list, chunksize=max(1, len(args_list) // (8 * n_jobs))))


def _truth_worker(args):
    cfg, rep = args
    return run_replication(cfg, rep, "truth")["points"]


def _mc_worker(args):
    cfg, rep = args
    return run_replication(cfg, rep, "mc")


def ground_truth(cfg: ExperimentConfig, n_jobs: int = 1):
    """MC mean and variance (ddof=1) of the ensemble prediction per target."""
    pts = _pool_map(_truth_worker, [(cfg, j) for j in range(cfg.n_truth)], n_jobs)
    pts = np.asarray(pts)  # (n_truth, q)
    means = pts.mean(axis=0)
    if cfg.n_truth > 1:
        tvars = pts.var(axis=0, ddof=1)
    else:
        tvars = np.zeros(pts.shape[1])
    return means, tvars


RESULT_FIELDS = (
    "target_id",
    "rep",
    "point",
    "vh",
    "vs",
    "var_raw",
    "var",
    "clipped",
    "ci_low",
    "ci_high",
    "seed",
)


def _result_row(target_id, rep, report: VarianceReport, seed_key) -> dict:
    return {
        "target_id": target_id,
        "rep": rep,
        "point": report.point,
        "vh": report.vh_hat,
        "vs": report.vs_hat,
        "var_raw": report.variance_raw,
        "var": report.variance,
        "clipped": int(report.clipped),
        "ci_low": report.ci_low,
        "ci_high": report.ci_high,
        "seed": seed_key,
    }


@dataclass(frozen=True)
class EvalRow:
    """Per-target aggregate of one estimator mode over all replications."""

    target_id: int
    mode: str
    n_reps: int
    truth_mean: float
    truth_var: float
    mean_point: float
    mean_estimate: float
    sd_estimate: float
    relative_bias: Optional[float]
    relative_bias_se: Optional[float]
    coverage: float
    coverage_oracle: float
    degenerate_truth: bool

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["degenerate_truth"] = int(self.degenerate_truth)
        return d


def aggregate_rows(rows, truth_means, truth_vars, alpha, mode) -> list:
    """Pure fold of replication rows into per-target EvalRows.

    ``rows`` may come straight from :func:`run_experiment` or be re-read
    from the emitted CSV; both reproduce the same aggregates.
    """
    z = normal_quantile(1 - alpha / 2)
    by_target = {}
    for r in rows:
        by_target.setdefault(int(r["target_id"]), []).append(r)
    out = []
    for tid in sorted(by_target):
        rs = by_target[tid]
        tmean = float(truth_means[tid])
        tvar = float(truth_vars[tid])
        raws = np.array([float(r["var_raw"]) for r in rs])
        points = np.array([float(r["point"]) for r in rs])
        cover = np.mean(
            [float(r["ci_low"]) <= tmean <= float(r["ci_high"]) for r in rs]
        )
        half = z * math.sqrt(max(tvar, 0.0))
        cover_oracle = np.mean(np.abs(points - tmean) <= half)
        degenerate = tvar <= 0.0
        mean_est = float(raws.mean())
        sd_est = float(raws.std(ddof=1)) if len(raws) > 1 else 0.0
        if degenerate:
            rel_bias = None
            rel_se = None
        else:
            rel_bias = (mean_est - tvar) / tvar
            rel_se = sd_est / math.sqrt(len(raws)) / tvar
        out.append(
            EvalRow(
                target_id=tid,
                mode=mode,
                n_reps=len(rs),
                truth_mean=tmean,
                truth_var=tvar,
                mean_point=float(points.mean()),
                mean_estimate=mean_est,
                sd_estimate=sd_est,
                relative_bias=rel_bias,
                relative_bias_se=rel_se,
                coverage=float(cover),
                coverage_oracle=float(cover_oracle),
                degenerate_truth=degenerate,
            )
        )
    return out


class _ResultWriter:
    """Incremental CSV writer; every row is flushed as soon as it lands."""

    def __init__(self, path):
        self.fh = open(path, "w", newline="")
        self.writer = csv.DictWriter(self.fh, fieldnames=RESULT_FIELDS)
        self.writer.writeheader()

    def write(self, row):
        self.writer.writerow({k: _csv_cell(row[k]) for k in RESULT_FIELDS})
        self.fh.flush()

    def close(self):
        self.fh.close()


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def read_results_csv(path) -> list:
    """Replication rows back from disk, floats restored exactly."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                {
                    "target_id": int(rec["target_id"]),
                    "rep": int(rec["rep"]),
                    "point": float(rec["point"]),
                    "vh": float(rec["vh"]),
                    "vs": float(rec["vs"]),
                    "var_raw": float(rec["var_raw"]),
                    "var": float(rec["var"]),
                    "clipped": int(rec["clipped"]),
                    "ci_low": float(rec["ci_low"]),
                    "ci_high": float(rec["ci_high"]),
                    "seed": int(rec["seed"]),
                }
            )
    return rows


def run_experiment(
    cfg: ExperimentConfig, out_dir=None, n_jobs: int = 1
) -> list:
    """Ground truth + n_mc evaluation replications + aggregation.

    Writes ``results.csv`` (and ``results_smoothed.csv`` when smoothing is
    on), ``summary.csv`` and ``config.json`` into ``out_dir`` if given.
    Returns the EvalRows (matched first, then smoothed).
    """
    if not cfg.targets:
        raise ForestVarError("experiment config has no targets")
    truth_means, truth_vars = ground_truth(cfg, n_jobs=n_jobs)

    writers = {}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            json.dump(_config_jsonable(cfg), fh, indent=2)
        writers["matched"] = _ResultWriter(os.path.join(out_dir, "results.csv"))
        if cfg.smooth_n > 0:
            writers["smoothed"] = _ResultWriter(
                os.path.join(out_dir, "results_smoothed.csv")
            )

    rows = {"matched": [], "smoothed": []}
    try:
        results = _pool_map(_mc_worker, [(cfg, r) for r in range(cfg.n_mc)], n_jobs)
        for res in results:
            for q, rep_report in enumerate(res["reports"]):
                row = _result_row(q, res["rep"], rep_report, res["seed_key"])
                rows["matched"].append(row)
                if "matched" in writers:
                    writers["matched"].write(row)
            if res["smoothed"] is not None:
                for q, rep_report in enumerate(res["smoothed"]):
                    row = _result_row(q, res["rep"], rep_report, res["seed_key"])
                    rows["smoothed"].append(row)
                    if "smoothed" in writers:
                        writers["smoothed"].write(row)
    finally:
        for w in writers.values():
            w.close()

    evals = aggregate_rows(rows["matched"], truth_means, truth_vars, cfg.alpha, "matched")
    if rows["smoothed"]:
        evals += aggregate_rows(
            rows["smoothed"], truth_means, truth_vars, cfg.alpha, "smoothed"
        )
    if out_dir is not None:
        _write_summary(os.path.join(out_dir, "summary.csv"), evals)
    return evals


def _write_summary(path, evals):
    fields = [f.name for f in dataclasses.fields(EvalRow)]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for e in evals:
            d = e.to_dict()
            w.writerow({k: ("" if d[k] is None else _csv_cell(d[k])) for k in fields})


def _config_jsonable(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["targets"] = [list(t) for t in cfg.targets]
    return d


# ---------------------------------------------------------------------------
# k > n/2 pipeline: independent subsets + auxiliary bootstrap trees


def run_bootstrap_replication(
    cfg: ExperimentConfig, rep: int, kind: str = "mc", boot_b: Optional[int] = None
) -> dict:
    """One replication of the large-k estimator (M = 1 subsets + bootstrap).

    The main ensemble averages B independent size-k subsets; the tree
    variance is estimated from ``boot_b`` (default B) extra trees fit on
    with-replacement resamples.
    """
    rs = replication_stream(cfg, rep, kind)
    data = generate(cfg.model, cfg.n, rs.split([_DATA_PATH]))
    pipe = rs.split([_PIPE_PATH])
    boot_pipe = rs.split([_PIPE_PATH, 1])
    bb = cfg.B if boot_b is None else boot_b
    fc = dataclasses.replace(cfg.forest_config(), M=1)
    plan = sample_subset_plan(cfg.n, cfg.k, cfg.B, pipe)
    kern = MeanKernel() if cfg.kernel == "mean" else None
    forest = fit_forest(data, plan, fc, pipe, kernel=kern)
    boot_plan = sample_bootstrap_plan(cfg.n, cfg.k, bb, boot_pipe)
    boot_forest = fit_forest(
        data, boot_plan, dataclasses.replace(fc, B=bb), boot_pipe, kernel=kern
    )
    targets = [TargetPoint(np.asarray(t)) for t in cfg.targets]
    main = predict_all(forest, targets)[:, 0, :]  # (q, B)
    boot = predict_all(boot_forest, targets)[:, 0, :]
    points = main.mean(axis=1)
    out = {"rep": rep, "kind": kind, "points": points, "seed_key": rs.key64()}
    if kind == "truth":
        return out
    out["reports"] = [
        bootstrap_variance_estimate(main[q], boot[q], cfg.alpha)
        for q in range(len(targets))
    ]
    return out
