"""Immutable dataset and target-point containers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, NonFiniteValue


def _frozen_f8(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name} contains NaN or infinite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Dataset:
    """Training corpus: an n x d feature matrix and a length-n response."""

    features: np.ndarray
    response: np.ndarray
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "features", _frozen_f8(self.features, 2, "features"))
        object.__setattr__(self, "response", _frozen_f8(self.response, 1, "response"))
        n, d = self.features.shape
        if n < 1 or d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got features shape {(n, d)}")
        if self.response.shape[0] != n:
            raise ValueError(
                f"response length {self.response.shape[0]} != feature rows {n}"
            )
        if self.feature_names is not None:
            names = tuple(str(c) for c in self.feature_names)
            if len(names) != d:
                raise ValueError(f"{len(names)} feature names for {d} columns")
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class TargetPoint:
    """A single prediction location in feature space."""

    coordinates: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "coordinates", _frozen_f8(self.coordinates, 1, "coordinates")
        )

    @property
    def d(self) -> int:
        return self.coordinates.shape[0]

    def require_dim(self, d: int) -> None:
        if self.d != d:
            raise DimensionMismatch(f"target has {self.d} coordinates, expected {d}")


def as_targets(points: Sequence, d: Optional[int] = None) -> list:
    """Coerce an iterable of coordinate vectors into TargetPoints."""
    out = []
    for p in points:
        t = p if isinstance(p, TargetPoint) else TargetPoint(np.asarray(p, dtype=float))
        if d is not None:
            t.require_dim(d)
        out.append(t)
    return out
