"""Ensembles over a sampling plan and the M x B prediction matrix.

Tree ``t = b*M + i`` is fit on ``plan.groups[b][i]`` with the per-tree
stream ``split(rs, [1, b, i])``, so trees are reproducible individually and
unaffected by changes to B.  The forest keeps the fitted trees (flat arrays),
not just predictions, so one fit serves many target points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._backend import core
from .config import ForestConfig, require_valid
from .data import Dataset, TargetPoint
from .errors import ForestVarError
from .kernels import Kernel
from .rng import RandomStream
from .sampling import SamplingPlan
from .tree import Tree, _TREE_PATH_PREFIX

FOREST_FORMAT = "forestvar.forest"
FOREST_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestTrees:
    """All trees of a forest as concatenated flat arrays."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    offsets: np.ndarray
    d: int

    @property
    def n_trees(self) -> int:
        return self.offsets.shape[0] - 1

    def tree(self, t: int, k_used: int, mtry: int, nodesize: int) -> Tree:
        """Materialize tree ``t`` as a standalone object."""
        a, b = self.offsets[t], self.offsets[t + 1]
        return Tree(
            feature=self.feature[a:b].copy(),
            threshold=self.threshold[a:b].copy(),
            left=self.left[a:b].copy(),
            right=self.right[a:b].copy(),
            value=self.value[a:b].copy(),
            count=self.count[a:b].copy(),
            k_used=k_used,
            d=self.d,
            mtry=mtry,
            nodesize=nodesize,
        )


@dataclass(frozen=True)
class PredictionMatrix:
    """Per-tree predictions at one target point, entry (i, b) = h(S_i^(b))."""

    values: np.ndarray  # shape (M, B)
    target: np.ndarray  # coordinates

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"prediction matrix must be 2-d, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("prediction matrix contains non-finite values")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def B(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Forest:
    """A fitted ensemble: plan + trees (or a generic kernel) + config."""

    data: Dataset
    plan: SamplingPlan
    config: ForestConfig
    stream: RandomStream
    trees: Optional[ForestTrees] = None
    kernel: Optional[Kernel] = None

    @property
    def n_trees(self) -> int:
        return self.plan.n_trees


def fit_forest(
    data: Dataset,
    plan: SamplingPlan,
    cfg: ForestConfig,
    rs: RandomStream,
    kernel: Optional[Kernel] = None,
) -> Forest:
    """Fit one kernel per plan entry (trees by default)."""
    if plan.n != data.n:
        raise ForestVarError(f"plan drawn for n={plan.n}, data has n={data.n}")
    rcfg = require_valid(cfg.resolved(data.n, data.d), data.n, data.d)
    if kernel is not None:
        return Forest(data=data, plan=plan, config=rcfg, stream=rs, kernel=kernel)
    b_grid = np.repeat(np.arange(plan.B), plan.M)
    i_grid = np.tile(np.arange(plan.M), plan.B)
    seeds = rs.key64_grid(_TREE_PATH_PREFIX, b_grid, i_grid)
    arrs = core.fit_forest_arrays(
        data.features, data.response, plan.flat_sets(), seeds, rcfg.mtry, rcfg.nodesize
    )
    trees = ForestTrees(d=data.d, **arrs)
    return Forest(data=data, plan=plan, config=rcfg, stream=rs, trees=trees)


def predict_all(forest: Forest, targets) -> np.ndarray:
    """Prediction matrices at several targets, shape (n_targets, M, B)."""
    coords = np.atleast_2d(
        np.asarray(
            [t.coordinates if isinstance(t, TargetPoint) else t for t in targets],
            dtype=np.float64,
        )
    )
    if coords.shape[1] != forest.data.d:
        raise ForestVarError(
            f"targets have {coords.shape[1]} coordinates, data has d={forest.data.d}"
        )
    plan = forest.plan
    if forest.trees is not None:
        tr = forest.trees
        flat = core.predict_forest_arrays(
            tr.feature, tr.threshold, tr.left, tr.right, tr.value, tr.offsets, coords
        )  # (n_trees, n_targets)
    else:
        streams = [
            forest.stream.split(_TREE_PATH_PREFIX + (b, i))
            for b in range(plan.B)
            for i in range(plan.M)
        ]
        cols = []
        for q in range(coords.shape[0]):
            x = TargetPoint(coords[q])
            cols.append(
                forest.kernel.evaluate_many(forest.data, plan.flat_sets(), x, streams)
            )
        flat = np.stack(cols, axis=1)
    # tree t = b*M + i  ->  entry (i, b)
    return flat.reshape(plan.B, plan.M, -1).transpose(2, 1, 0)


def predict_matrix(forest: Forest, x) -> PredictionMatrix:
    """The M x B prediction matrix at a single target point."""
    xt = x if isinstance(x, TargetPoint) else TargetPoint(np.asarray(x, float))
    xt.require_dim(forest.data.d)
    values = predict_all(forest, [xt])[0]
    return PredictionMatrix(values=values, target=xt.coordinates)


def point_estimate(pm: PredictionMatrix) -> float:
    """Ensemble point prediction: the grand mean of all M*B tree predictions.

    Reduction order is fixed (row-major pairwise summation via numpy) for
    bitwise reproducibility.
    """
    if pm.values.size == 0:
        raise ForestVarError("empty prediction matrix")
    return float(pm.values.mean())


def save_forest(forest: Forest, path) -> None:
    """Persist a tree forest (config + plan + trees) as versioned JSON."""
    if forest.trees is None:
        raise ForestVarError("only tree forests can be persisted")
    tr = forest.trees
    blob = {
        "format": FOREST_FORMAT,
        "version": FOREST_FORMAT_VERSION,
        "config": {
            "k": forest.config.k,
            "M": forest.config.M,
            "B": forest.config.B,
            "mtry": forest.config.mtry,
            "nodesize": forest.config.nodesize,
            "seed": forest.config.seed,
            "smoothing_neighbors": forest.config.smoothing_neighbors,
            "alpha": forest.config.alpha,
        },
        "stream": {"seed": forest.stream.seed, "path": list(forest.stream.path)},
        "plan": forest.plan.to_jsonable(),
        "trees": {
            "feature": tr.feature.tolist(),
            "threshold": tr.threshold.tolist(),
            "left": tr.left.tolist(),
            "right": tr.right.tolist(),
            "value": tr.value.tolist(),
            "count": tr.count.tolist(),
            "offsets": tr.offsets.tolist(),
            "d": tr.d,
        },
        "data": {
            "features": forest.data.features.tolist(),
            "response": forest.data.response.tolist(),
            "feature_names": list(forest.data.feature_names)
            if forest.data.feature_names
            else None,
        },
    }
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_forest(path) -> Forest:
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format") != FOREST_FORMAT:
        raise ForestVarError(f"not a forest file: {path}")
    if blob.get("version") != FOREST_FORMAT_VERSION:
        raise ForestVarError(f"unsupported forest version {blob.get('version')}")
    t = blob["trees"]
    trees = ForestTrees(
        feature=np.asarray(t["feature"], dtype=np.int32),
        threshold=np.asarray(t["threshold"], dtype=np.float64),
        left=np.asarray(t["left"], dtype=np.int32),
        right=np.asarray(t["right"], dtype=np.int32),
        value=np.asarray(t["value"], dtype=np.float64),
        count=np.asarray(t["count"], dtype=np.int32),
        offsets=np.asarray(t["offsets"], dtype=np.int64),
        d=int(t["d"]),
    )
    dd = blob["data"]
    data = Dataset(
        features=np.asarray(dd["features"], dtype=np.float64),
        response=np.asarray(dd["response"], dtype=np.float64),
        feature_names=dd["feature_names"],
    )
    c = blob["config"]
    cfg = ForestConfig(
        k=c["k"],
        M=c["M"],
        B=c["B"],
        mtry=c["mtry"],
        nodesize=c["nodesize"],
        seed=c["seed"],
        smoothing_neighbors=c["smoothing_neighbors"],
        alpha=c["alpha"],
    )
    stream = RandomStream(blob["stream"]["seed"], tuple(blob["stream"]["path"]))
    plan = SamplingPlan.from_jsonable(blob["plan"])
    return Forest(data=data, plan=plan, config=cfg, stream=stream, trees=trees)
