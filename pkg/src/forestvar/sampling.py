"""Subsample plans: matched groups, independent subsets, bootstrap resamples.

Group ``b`` of a plan is generated from its own counter-based key
``split(rs, [0, b])``, so plans are reproducible and growing ``B`` never
changes the composition of earlier groups.  Matched groups are built by a
partial Fisher-Yates shuffle of ``0..n-1`` (vectorized across groups) whose
first ``M*k`` entries are cut into M consecutive blocks of k: within a group
the blocks are pairwise disjoint by construction and jointly exchangeable,
so every index lands in every block position with probability k/n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEnsemble, GroupTooSmall, KOutOfRange, MTooLarge
from .rng import GOLDEN, RandomStream, mix64_array

MODE_MATCHED = "matched"
MODE_SUBSETS = "independent_subsets"
MODE_BOOTSTRAP = "bootstrap_resamples"

_SAMPLING_PATH = 0  # purpose prefix for plan randomness


@dataclass(frozen=True)
class SamplingPlan:
    """B groups of M index sets of size k over a population of n rows."""

    mode: str
    n: int
    groups: np.ndarray  # int64, shape (B, M, k)

    def __post_init__(self):
        g = np.asarray(self.groups, dtype=np.int64)
        if g.ndim != 3:
            raise ValueError(f"groups must have shape (B, M, k), got {g.shape}")
        if g.size and (g.min() < 0 or g.max() >= self.n):
            raise ValueError("plan contains indices outside 0..n-1")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "groups", g)

    @property
    def B(self) -> int:
        return self.groups.shape[0]

    @property
    def M(self) -> int:
        return self.groups.shape[1]

    @property
    def k(self) -> int:
        return self.groups.shape[2]

    @property
    def n_trees(self) -> int:
        return self.B * self.M

    def flat_sets(self) -> np.ndarray:
        """All index sets as one (B*M, k) array, set ``b*M + i`` at row t."""
        return self.groups.reshape(self.B * self.M, self.k)

    def to_jsonable(self) -> dict:
        return {
            "mode": self.mode,
            "n": int(self.n),
            "k": int(self.k),
            "M": int(self.M),
            "B": int(self.B),
            "groups": self.groups.tolist(),
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "SamplingPlan":
        return cls(mode=str(obj["mode"]), n=int(obj["n"]), groups=np.asarray(obj["groups"]))


def _counter_draws(keys: np.ndarray, n_draws: int) -> np.ndarray:
    """(len(keys), n_draws) uint64 draws from per-key splitmix64 streams."""
    state = keys.astype(np.uint64, copy=True)
    out = np.empty((keys.shape[0], n_draws), dtype=np.uint64)
    for j in range(n_draws):
        state += np.uint64(GOLDEN)
        out[:, j] = mix64_array(state)
    return out


def _partial_shuffles(n: int, take: int, keys: np.ndarray) -> np.ndarray:
    """First ``take`` entries of a Fisher-Yates shuffle of 0..n-1 per key."""
    nrows = keys.shape[0]
    pos = np.tile(np.arange(n, dtype=np.int64), (nrows, 1))
    state = keys.astype(np.uint64, copy=True)
    rowsel = np.arange(nrows)
    for j in range(take):
        state += np.uint64(GOLDEN)
        z = mix64_array(state)
        r = j + (z % np.uint64(n - j)).astype(np.int64)
        tmp = pos[rowsel, r].copy()
        pos[rowsel, r] = pos[:, j]
        pos[:, j] = tmp
    return pos[:, :take]


def sample_matched_groups(
    n: int, k: int, M: int, B: int, rs: RandomStream
) -> SamplingPlan:
    """B matched groups: M mutually exclusive size-k subsets per group.

    Each group draws M*k indices without replacement from 0..n-1 and
    partitions them into M consecutive blocks of k; leftover indices are
    simply unused in that group.  Groups are drawn independently of each
    other (fresh draw per group).
    """
    if not (1 <= k < n):
        raise KOutOfRange(f"need 1 <= k < n, got k={k}, n={n}")
    if M < 2:
        raise GroupTooSmall(f"matched groups need M >= 2, got M={M}")
    if M * k > n:
        raise MTooLarge(f"M={M} disjoint size-{k} subsets do not fit in n={n}")
    if B < 1:
        raise DegenerateEnsemble(f"need B >= 1, got B={B}")
    keys = rs.key64_grid([_SAMPLING_PATH], np.arange(B))
    drawn = _partial_shuffles(n, M * k, keys)
    groups = np.sort(drawn.reshape(B, M, k), axis=2)
    return SamplingPlan(MODE_MATCHED, n, groups)


def sample_subset_plan(n: int, k: int, B: int, rs: RandomStream) -> SamplingPlan:
    """B independent uniform size-k subsets (M = 1); subsets may repeat."""
    if not (1 <= k <= n):
        raise KOutOfRange(f"need 1 <= k <= n, got k={k}, n={n}")
    if B < 2:
        raise DegenerateEnsemble(f"need B >= 2 subsets, got B={B}")
    keys = rs.key64_grid([_SAMPLING_PATH], np.arange(B))
    drawn = _partial_shuffles(n, k, keys)
    groups = np.sort(drawn, axis=1).reshape(B, 1, k)
    return SamplingPlan(MODE_SUBSETS, n, groups)


def sample_bootstrap_plan(n: int, k: int, B: int, rs: RandomStream) -> SamplingPlan:
    """B size-k multisets drawn i.i.d. with replacement from 0..n-1."""
    if k < 1:
        raise KOutOfRange(f"need k >= 1, got k={k}")
    if n < 1:
        raise KOutOfRange(f"need n >= 1, got n={n}")
    if B < 2:
        raise DegenerateEnsemble(f"need B >= 2 resamples, got B={B}")
    keys = rs.key64_grid([_SAMPLING_PATH], np.arange(B))
    draws = _counter_draws(keys, k) % np.uint64(n)
    groups = np.sort(draws.astype(np.int64), axis=1).reshape(B, 1, k)
    return SamplingPlan(MODE_BOOTSTRAP, n, groups)
