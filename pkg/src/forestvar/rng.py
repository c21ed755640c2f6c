"""Deterministic, splittable random streams.

A :class:`RandomStream` is identified by ``(seed, path)`` where ``path`` is a
tuple of non-negative integers.  Splitting appends path elements and costs
nothing; randomness is materialized on demand in one of two forms:

* :meth:`RandomStream.generator` - a full ``numpy`` generator (PCG64 seeded
  through ``SeedSequence(seed, spawn_key=path)``), used for data generation,
  neighbor sampling and anything that needs high-quality bulk draws.
* :meth:`RandomStream.key64` - a single 64-bit key obtained by folding the
  path through the splitmix64 finalizer, used to seed the counter-based
  streams that drive subsample shuffling and per-node feature draws inside
  the tree kernel.  The fold is compositional:
  ``fold64(seed, p1 + p2) == fold from fold64(seed, p1) absorbing p2``,
  which is what makes ``split(split(s, [2]), [3])`` identical to
  ``split(s, [2, 3])``.

Identical ``(seed, path)`` always reproduces the identical draw sequence;
distinct paths give statistically independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer: a strong 64-bit mixing permutation."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _absorb(h: int, element: int) -> int:
    return mix64(h ^ mix64((element + GOLDEN) & _MASK64))


def fold64(seed: int, path: Iterable[int] = ()) -> int:
    """Fold ``(seed, path)`` into a single uint64 key."""
    h = mix64((seed + GOLDEN) & _MASK64)
    for p in path:
        h = _absorb(h, p)
    return h


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`mix64` on a uint64 array."""
    z = z.astype(np.uint64, copy=True)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def fold64_array(seed: int, path: Sequence[int], *tails: np.ndarray) -> np.ndarray:
    """Vectorized fold: one key per element of the broadcast ``tails``.

    ``fold64_array(s, p, a, b)[i] == fold64(s, (*p, a[i], b[i]))``.
    """
    h0 = fold64(seed, path)
    shape = np.broadcast_shapes(*(np.shape(t) for t in tails))
    h = np.full(shape, h0, dtype=np.uint64)
    for t in tails:
        t64 = np.asarray(t, dtype=np.uint64)
        h = mix64_array(h ^ mix64_array(t64 + np.uint64(GOLDEN)))
    return h


@dataclass(frozen=True)
class RandomStream:
    """Splittable deterministic source identified by ``(seed, path)``."""

    seed: int
    path: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for p in self.path:
            if not (0 <= int(p) < 2**32):
                raise ValueError(f"stream path elements must be in [0, 2^32): {p}")

    def split(self, path: Iterable[int]) -> "RandomStream":
        """Child stream at ``self.path + path``."""
        return RandomStream(self.seed, self.path + tuple(int(p) for p in path))

    def generator(self) -> np.random.Generator:
        """Materialize a numpy generator for this stream (fresh each call)."""
        ss = np.random.SeedSequence(self.seed & _MASK64, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))

    def key64(self) -> int:
        """Fold this stream into a uint64 counter-stream key."""
        return fold64(self.seed, self.path)

    def key64_grid(self, extra_path: Sequence[int], *tails: np.ndarray) -> np.ndarray:
        """Vector of keys for ``split(self, [*extra_path, t...])`` over ``tails``."""
        return fold64_array(self.seed, self.path + tuple(extra_path), *tails)


def split_stream(rs: RandomStream, path: Iterable[int]) -> RandomStream:
    """Functional alias for :meth:`RandomStream.split`."""
    return rs.split(path)
