"""Variance estimators for ensemble predictions, and the intervals they feed.

Given the M x B prediction matrix at a target point, the matched-group
estimator combines

* ``vh_hat``: the average over groups of the within-group sample variance
  (unbiased for the single-tree variance because sets within a group are
  disjoint), and
* ``vs_hat``: the sample variance of all M*B predictions (divisor MB - 1),

into ``vh_hat - ((MB-1)/(MB)) * vs_hat``, which is unbiased for the variance
of the ensemble point estimate.  Being a difference, the raw value can come
out negative at small B; reports carry both the raw value and the clipped
``max(raw, 0)`` with a flag.

For subsample sizes above n/2 no disjoint pairs exist, so ``vh`` is instead
estimated from an auxiliary set of bootstrap-resample trees and combined
with the sample variance of the main (M = 1) trees.

The locally smoothed variant averages the raw matched estimate over the
target point and N neighbors drawn uniformly on the sphere whose radius is
the distance from the target to its nearest training row, reusing the same
fitted forest (set ``refit=True`` to refit per neighbor instead).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import ForestConfig
from .data import Dataset, TargetPoint
from .errors import DegenerateEnsemble, GroupTooSmall, NegativeVariance
from .forest import (
    Forest,
    PredictionMatrix,
    fit_forest,
    point_estimate,
    predict_all,
    predict_matrix,
)
from .rng import RandomStream

MODE_MATCHED = "matched"
MODE_BOOTSTRAP = "bootstrap"
MODE_SMOOTHED = "smoothed"

_NEIGHBOR_PATH = 2  # stream purpose code for neighbor generation
_REFIT_PATH = 3  # stream purpose code for per-neighbor refits


@dataclass(frozen=True)
class VarianceReport:
    """Point estimate, variance estimate (raw and clipped) and CI bounds."""

    point: float
    vh_hat: float
    vs_hat: float
    variance_raw: float
    variance: float
    clipped: bool
    ci_low: float
    ci_high: float
    alpha: float
    mode: str

    CSV_FIELDS = (
        "point",
        "vh",
        "vs",
        "var_raw",
        "var",
        "clipped",
        "ci_low",
        "ci_high",
        "alpha",
        "mode",
    )

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "vh_hat": self.vh_hat,
            "vs_hat": self.vs_hat,
            "variance_raw": self.variance_raw,
            "variance": self.variance,
            "clipped": self.clipped,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "alpha": self.alpha,
            "mode": self.mode,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def csv_row(self) -> list:
        return [
            repr(self.point),
            repr(self.vh_hat),
            repr(self.vs_hat),
            repr(self.variance_raw),
            repr(self.variance),
            int(self.clipped),
            repr(self.ci_low),
            repr(self.ci_high),
            repr(self.alpha),
            self.mode,
        ]


# Inverse standard-normal CDF.  Rational approximation (A&S-style central /
# tail split) refined by one Halley step against erfc; absolute error is
# far below the documented 1e-9 tolerance (~1e-15 in practice).
_PPF_A = (
    -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
    1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00,
)
_PPF_B = (
    -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
    6.680131188771972e01, -1.328068155288572e01,
)
_PPF_C = (
    -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
    -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00,
)
_PPF_D = (
    7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
    3.754408661907416e00,
)


def normal_quantile(p: float) -> float:
    """Inverse CDF of the standard normal at p in (0, 1)."""
    if not (0.0 < p < 1.0):
        raise ValueError(f"quantile level must be in (0,1), got {p}")
    a, b, c, d = _PPF_A, _PPF_B, _PPF_C, _PPF_D
    p_low, p_high = 0.02425, 1 - 0.02425
    if p < p_low:
        q = math.sqrt(-2 * math.log(p))
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1
        )
    elif p <= p_high:
        q = p - 0.5
        r = q * q
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / (
            ((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1
        )
    else:
        q = math.sqrt(-2 * math.log(1 - p))
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1
        )
    # one Halley refinement step
    e = 0.5 * math.erfc(-x / math.sqrt(2)) - p
    u = e * math.sqrt(2 * math.pi) * math.exp(x * x / 2)
    return x - u / (1 + x * u / 2)


def confidence_interval(point: float, variance: float, alpha: float):
    """Normal interval: point +/- z_{alpha/2} * sqrt(variance)."""
    if variance < 0:
        raise NegativeVariance(f"variance must be >= 0, got {variance} (clip first)")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    half = normal_quantile(1 - alpha / 2) * math.sqrt(variance)
    return point - half, point + half


def estimate_vh_matched(pm: PredictionMatrix) -> float:
    """Average over groups of the within-group sample variance (divisor M-1)."""
    if pm.M < 2:
        raise GroupTooSmall(f"within-group variance needs M >= 2, got M={pm.M}")
    v = pm.values
    dev = v - v.mean(axis=0)
    return float(((dev * dev).sum(axis=0) / (pm.M - 1)).mean())


def estimate_vs(pm: PredictionMatrix) -> float:
    """Sample variance of all M*B predictions with divisor MB - 1."""
    mb = pm.M * pm.B
    if mb < 2:
        raise DegenerateEnsemble(f"need M*B >= 2 predictions, got {mb}")
    dev = pm.values - pm.values.mean()
    return float((dev * dev).sum() / (mb - 1))


def _report(point, vh, vs, raw, alpha, mode) -> VarianceReport:
    clipped = raw < 0
    var = 0.0 if clipped else raw
    lo, hi = confidence_interval(point, var, alpha)
    return VarianceReport(
        point=point,
        vh_hat=vh,
        vs_hat=vs,
        variance_raw=raw,
        variance=var,
        clipped=bool(clipped),
        ci_low=lo,
        ci_high=hi,
        alpha=alpha,
        mode=mode,
    )


def matched_variance_estimate(pm: PredictionMatrix, alpha: float = 0.10) -> VarianceReport:
    """Unbiased variance estimate from a matched-group prediction matrix."""
    vh = estimate_vh_matched(pm)
    vs = estimate_vs(pm)
    mb = pm.M * pm.B
    raw = vh - (mb - 1) / mb * vs
    return _report(point_estimate(pm), vh, vs, raw, alpha, MODE_MATCHED)


def bootstrap_variance_estimate(
    main_preds, boot_preds, alpha: float = 0.10
) -> VarianceReport:
    """Variance estimate for k > n/2: tree variance from bootstrap trees.

    ``main_preds`` are the B predictions of the ensemble's own (M = 1)
    subsample trees; ``boot_preds`` come from auxiliary trees fit on
    with-replacement resamples and estimate the tree variance.
    """
    main = np.asarray(main_preds, dtype=np.float64).ravel()
    boot = np.asarray(boot_preds, dtype=np.float64).ravel()
    if main.size < 2 or boot.size < 2:
        raise DegenerateEnsemble("need at least two main and two bootstrap trees")
    vh = float(np.var(boot, ddof=1))
    vs = float(np.var(main, ddof=1))
    B = main.size
    raw = vh - (B - 1) / B * vs
    return _report(float(main.mean()), vh, vs, raw, alpha, MODE_BOOTSTRAP)


def generate_neighbors(
    x: TargetPoint, data: Dataset, N: int, rs: RandomStream
) -> list:
    """N points uniform on the sphere around x with radius = nearest-row distance."""
    if N < 0:
        raise ValueError(f"N must be >= 0, got {N}")
    if N == 0:
        return []
    x = x if isinstance(x, TargetPoint) else TargetPoint(np.asarray(x, float))
    x.require_dim(data.d)
    diff = data.features - x.coordinates[None, :]
    radius = float(np.sqrt((diff * diff).sum(axis=1).min()))
    gen = rs.generator()
    g = gen.standard_normal((N, data.d))
    norms = np.sqrt((g * g).sum(axis=1))
    zero = norms == 0.0
    if zero.any():  # probability zero, but keep the map total
        g[zero, 0] = 1.0
        norms[zero] = 1.0
    pts = x.coordinates[None, :] + radius * g / norms[:, None]
    return [TargetPoint(p) for p in pts]


def smoothed_variance_estimate(
    forest: Forest,
    x,
    data: Dataset,
    N: int,
    rs: RandomStream,
    alpha: float = 0.10,
    refit: bool = False,
    cfg: Optional[ForestConfig] = None,
) -> VarianceReport:
    """Average of the matched raw estimate over x and N sphere neighbors.

    The same fitted forest is reused at every point; with ``refit=True`` a
    fresh plan and forest are fit per neighbor (full-pipeline smoothing).
    The point estimate and CI center remain the ensemble prediction at x.
    """
    xt = x if isinstance(x, TargetPoint) else TargetPoint(np.asarray(x, float))
    neighbors = generate_neighbors(xt, data, N, rs.split([_NEIGHBOR_PATH]))
    base = matched_variance_estimate(predict_matrix(forest, xt), alpha)
    if N == 0:
        return base
    raws, vhs, vss = [base.variance_raw], [base.vh_hat], [base.vs_hat]
    if not refit:
        mats = predict_all(forest, neighbors)
        for q in range(len(neighbors)):
            pm = PredictionMatrix(values=mats[q], target=neighbors[q].coordinates)
            rep = matched_variance_estimate(pm, alpha)
            raws.append(rep.variance_raw)
            vhs.append(rep.vh_hat)
            vss.append(rep.vs_hat)
    else:
        from .sampling import sample_matched_groups

        fit_cfg = cfg if cfg is not None else forest.config
        for q, nb in enumerate(neighbors):
            pipe = rs.split([_REFIT_PATH, q])
            plan = sample_matched_groups(
                data.n, fit_cfg.k, fit_cfg.M, fit_cfg.B, pipe
            )
            fq = fit_forest(data, plan, fit_cfg, pipe)
            rep = matched_variance_estimate(predict_matrix(fq, nb), alpha)
            raws.append(rep.variance_raw)
            vhs.append(rep.vh_hat)
            vss.append(rep.vs_hat)
    raw = float(np.mean(raws))
    return _report(base.point, float(np.mean(vhs)), float(np.mean(vss)), raw, alpha,
                   MODE_SMOOTHED)
