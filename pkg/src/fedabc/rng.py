"""Seedable, splittable random streams.

Every stochastic routine in this package draws from an :class:`RngStream`.
Streams are backed by the counter-based Philox generator seeded through
``numpy.random.SeedSequence``, so a given (seed, split path, draw schedule)
reproduces the same values run after run. The distributed run relies on this:
coordinator and the centralized reference consume one stream with an identical
schedule and must agree bit for bit.

A stream is single-owner. Concurrent work gets its own child via
:meth:`RngStream.split`; parent and children never share generator state and
their outputs are statistically independent.
"""
from __future__ import annotations

import numpy as np

_MAX_SEED = 2**64


class RngStream:
    """Deterministic random stream addressed by (seed, split path)."""

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        seed = int(seed)
        if not 0 <= seed < _MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self._path = tuple(int(i) for i in _path)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self._path)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, path={self._path})"

    def split(self, index: int) -> RngStream:
        """Derive the independent child stream with the given split index."""
        if index < 0:
            raise ValueError("split index must be nonnegative")
        return RngStream(self.seed, self._path + (int(index),))

    def clone(self) -> RngStream:
        """Copy of this stream frozen at its current state.

        The copy replays the same future draws as the original; mutating one
        never affects the other. Intended for paired evaluations that must
        share a draw schedule (e.g. a loss and its gradient).
        """
        other = RngStream(self.seed, self._path)
        other._gen.bit_generator.state = self._gen.bit_generator.state
        return other

    # -- draw primitives ---------------------------------------------------

    def random(self) -> float:
        """One uniform draw on [0, 1)."""
        return float(self._gen.random())

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def standard_gamma(self, shape):
        return self._gen.standard_gamma(shape)

    def chisquare(self, df: float) -> float:
        return float(self._gen.chisquare(df))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)
