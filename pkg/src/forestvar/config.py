"""Ensemble configuration and total validation."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from .errors import InvalidConfig


def default_mtry(d: int) -> int:
    """Candidate features per split: ceil(d / 2)."""
    return max(1, (d + 1) // 2)


def default_nodesize(n: int) -> int:
    """Minimum terminal-node size: 2 * floor(ln n), at least 1."""
    return max(1, 2 * int(math.floor(math.log(n))))


@dataclass(frozen=True)
class ForestConfig:
    """Tuning parameters of the subsampled ensemble.

    ``mtry`` and ``nodesize`` may be left as None and are resolved against
    the dataset at fit time (``default_mtry`` / ``default_nodesize``).
    """

    k: int
    M: int = 2
    B: int = 1000
    mtry: Optional[int] = None
    nodesize: Optional[int] = None
    seed: int = 0
    smoothing_neighbors: int = 0
    alpha: float = 0.10

    def resolved(self, n: int, d: int) -> "ForestConfig":
        """Fill in data-dependent defaults."""
        mtry = self.mtry if self.mtry is not None else default_mtry(d)
        nodesize = self.nodesize if self.nodesize is not None else default_nodesize(n)
        return replace(self, mtry=mtry, nodesize=nodesize)


@dataclass(frozen=True)
class ConfigViolation:
    code: str
    message: str


def validate_config(cfg: ForestConfig, n: int, d: Optional[int] = None) -> list:
    """Return the complete list of invariant violations (empty if valid).

    Validation is total: every configuration either passes or yields at
    least one named violation; nothing raises here.
    """
    v = []
    if not (1 <= cfg.k < n):
        v.append(ConfigViolation("KOutOfRange", f"need 1 <= k < n, got k={cfg.k}, n={n}"))
    else:
        if cfg.M > n // cfg.k:
            v.append(
                ConfigViolation(
                    "MTooLarge",
                    f"M={cfg.M} disjoint size-{cfg.k} subsets do not fit in n={n} "
                    f"(max {n // cfg.k})",
                )
            )
    if cfg.M < 1:
        v.append(ConfigViolation("MTooLarge", f"M must be >= 1, got {cfg.M}"))
    if cfg.B < 1:
        v.append(ConfigViolation("DegenerateEnsemble", f"B must be >= 1, got {cfg.B}"))
    if cfg.M * cfg.B < 2:
        v.append(
            ConfigViolation(
                "DegenerateEnsemble",
                f"M*B = {cfg.M * cfg.B} < 2: variance needs at least two trees",
            )
        )
    if cfg.mtry is not None:
        if cfg.mtry < 1 or (d is not None and cfg.mtry > d):
            v.append(
                ConfigViolation("MtryOutOfRange", f"need 1 <= mtry <= d, got {cfg.mtry}")
            )
    if cfg.nodesize is not None and cfg.nodesize < 1:
        v.append(ConfigViolation("NodesizeOutOfRange", f"nodesize must be >= 1"))
    if not (0.0 < cfg.alpha < 1.0):
        v.append(ConfigViolation("AlphaOutOfRange", f"alpha must be in (0,1), got {cfg.alpha}"))
    if cfg.smoothing_neighbors < 0:
        v.append(
            ConfigViolation(
                "NegativeNeighborCount",
                f"smoothing_neighbors must be >= 0, got {cfg.smoothing_neighbors}",
            )
        )
    return v


def require_valid(cfg: ForestConfig, n: int, d: Optional[int] = None) -> ForestConfig:
    """Return ``cfg`` unchanged if valid, else raise InvalidConfig."""
    violations = validate_config(cfg, n, d)
    if violations:
        raise InvalidConfig(violations)
    return cfg
