"""Kernel abstraction: anything that maps (data, index subset, target) to a real.

Kernels must be permutation-symmetric in the index subset and deterministic
given an identical random stream; implementations canonicalize by sorting
the indices before any order-sensitive arithmetic so that symmetry holds
bitwise.  The regression tree is the production kernel; the analytic kernels
here give estimator tests a ground truth that is known in closed form.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np

from .config import ForestConfig
from .data import Dataset, TargetPoint
from .rng import RandomStream


class Kernel(ABC):
    """Evaluator h(S) for size-k index subsets of a dataset."""

    @abstractmethod
    def evaluate(
        self,
        data: Dataset,
        indices,
        x: Optional[TargetPoint],
        stream: Optional[RandomStream],
    ) -> float:
        raise NotImplementedError

    def evaluate_many(
        self,
        data: Dataset,
        sets: np.ndarray,
        x: Optional[TargetPoint],
        streams: Optional[Sequence[RandomStream]] = None,
    ) -> np.ndarray:
        """Evaluate one subset per row of ``sets``; default is a plain loop."""
        if streams is None:
            streams = [None] * sets.shape[0]
        return np.array(
            [self.evaluate(data, s, x, st) for s, st in zip(sets, streams)],
            dtype=np.float64,
        )


class MeanKernel(Kernel):
    """Subsample mean of the response; ignores the target point."""

    def evaluate(self, data, indices, x=None, stream=None) -> float:
        rows = np.sort(np.asarray(indices, dtype=np.int64))
        vals = data.response[rows]
        return float(vals.cumsum()[-1] / vals.size)

    def evaluate_many(self, data, sets, x=None, streams=None) -> np.ndarray:
        rows = np.sort(np.asarray(sets, dtype=np.int64), axis=1)
        return data.response[rows].cumsum(axis=1)[:, -1] / rows.shape[1]


class OneNearestNeighborKernel(Kernel):
    """Response of the subsample row closest to the target (ties: lowest index)."""

    def evaluate(self, data, indices, x, stream=None) -> float:
        rows = np.sort(np.asarray(indices, dtype=np.int64))
        diff = data.features[rows] - x.coordinates[None, :]
        d2 = (diff * diff).sum(axis=1)
        return float(data.response[rows[int(np.argmin(d2))]])

    def evaluate_many(self, data, sets, x, streams=None) -> np.ndarray:
        rows = np.sort(np.asarray(sets, dtype=np.int64), axis=1)
        diff = data.features - x.coordinates[None, :]
        d2 = (diff * diff).sum(axis=1)
        nearest = rows[np.arange(rows.shape[0]), d2[rows].argmin(axis=1)]
        return data.response[nearest]


class TreeKernel(Kernel):
    """The regression-tree kernel; requires a per-evaluation random stream."""

    def __init__(self, cfg: ForestConfig):
        self.cfg = cfg

    def evaluate(self, data, indices, x, stream) -> float:
        from .tree import fit_tree, predict_tree

        if stream is None:
            raise ValueError("TreeKernel.evaluate requires a RandomStream")
        return predict_tree(fit_tree(data, indices, self.cfg, stream), x)
