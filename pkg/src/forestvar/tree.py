"""CART-style regression trees fit on index subsets.

A tree is grown by recursive variance-reduction splitting: at each node,
``mtry`` candidate features are drawn, every midpoint between consecutive
distinct sorted values is scored by the decrease in within-node sum of
squared deviations, and the best (feature, threshold) wins.  Ties go to the
lowest feature index, then the lowest threshold; points with
``x[feature] <= threshold`` are routed left.  Growth stops when a node has
fewer than ``2 * nodesize`` samples, is pure, or admits no strictly
SSE-reducing split; split positions are restricted so both children keep at
least ``nodesize`` samples.  Leaves predict the mean response of their
samples.  Duplicate indices (bootstrap multisets) simply appear as repeated
rows, which weights them by multiplicity in sums and means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import BACKEND, core
from .config import ForestConfig
from .data import Dataset, TargetPoint
from .errors import DimensionMismatch, EmptySubsample
from .rng import RandomStream

_TREE_PATH_PREFIX = (1,)  # stream purpose code for per-tree randomness


def active_backend() -> str:
    """Name of the tree kernel backend in use ("compiled" or "python")."""
    return BACKEND


@dataclass(frozen=True)
class Tree:
    """Flat array encoding of a fitted tree (see module docstring)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    k_used: int
    d: int
    mtry: int
    nodesize: int

    def __post_init__(self):
        for name in ("feature", "threshold", "left", "right", "value", "count"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


def fit_tree(
    data: Dataset, indices, cfg: ForestConfig, rs: RandomStream
) -> Tree:
    """Fit one tree on ``data`` restricted to ``indices`` (set or multiset)."""
    rows = np.sort(np.asarray(indices, dtype=np.int64))
    if rows.size == 0:
        raise EmptySubsample("cannot fit a tree on an empty index set")
    if rows.min() < 0 or rows.max() >= data.n:
        raise IndexError("subsample indices outside 0..n-1")
    rcfg = cfg.resolved(data.n, data.d)
    seeds = np.array([rs.key64()], dtype=np.uint64)
    arrs = core.fit_forest_arrays(
        data.features, data.response, rows[None, :], seeds, rcfg.mtry, rcfg.nodesize
    )
    return Tree(
        feature=arrs["feature"],
        threshold=arrs["threshold"],
        left=arrs["left"],
        right=arrs["right"],
        value=arrs["value"],
        count=arrs["count"],
        k_used=int(rows.size),
        d=data.d,
        mtry=rcfg.mtry,
        nodesize=rcfg.nodesize,
    )


def predict_tree(tree: Tree, x) -> float:
    """Route a target point through the tree; returns the leaf prediction."""
    coords = x.coordinates if isinstance(x, TargetPoint) else np.asarray(x, float)
    if coords.shape != (tree.d,):
        raise DimensionMismatch(
            f"target has shape {coords.shape}, tree expects ({tree.d},)"
        )
    offsets = np.array([0, tree.n_nodes], dtype=np.int64)
    out = core.predict_forest_arrays(
        tree.feature, tree.threshold, tree.left, tree.right, tree.value,
        offsets, coords[None, :],
    )
    return float(out[0, 0])


def tree_stream(rs: RandomStream, b: int, i: int) -> RandomStream:
    """The per-tree stream for group b, position i."""
    return rs.split(_TREE_PATH_PREFIX + (b, i))


def format_tree(tree: Tree, feature_names=None) -> str:
    """Indented text rendering, for debugging."""
    names = feature_names or [f"x{j}" for j in range(tree.d)]
    lines = []

    def walk(q, depth):
        pad = "  " * depth
        if tree.feature[q] < 0:
            lines.append(f"{pad}leaf value={tree.value[q]:.6g} n={tree.count[q]}")
        else:
            f = tree.feature[q]
            lines.append(
                f"{pad}{names[f]} <= {tree.threshold[q]:.6g} (n={tree.count[q]})"
            )
            walk(tree.left[q], depth + 1)
            walk(tree.right[q], depth + 1)

    walk(0, 0)
    return "\n".join(lines)
