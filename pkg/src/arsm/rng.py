"""Seeded, splittable random streams built on the counter-based Philox generator.

Every stochastic operation in this package draws from a stream named by a
``(seed, stream_id)`` pair.  Identical pairs yield bitwise-identical draw
sequences, and distinct stream ids give statistically independent Philox
streams, so parallel consumers (per-rollout, per-replicate) stay reproducible
regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    # SplitMix64 finalizer: full-avalanche 64-bit mixing for stream-id derivation.
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _mix(parts: tuple[int, ...]) -> int:
    acc = 0
    for p in parts:
        acc = _splitmix64(acc ^ (int(p) & _MASK64))
    return acc


@dataclass(frozen=True)
class RngStream:
    """Name of one reproducible random stream.

    ``derive(*parts)`` produces a child stream whose id mixes the parent id
    with the given integer path, e.g. ``root.derive(episode, timestep, k)``
    for the rollout at one (episode, timestep, pseudo-action) coordinate.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def derive(self, *parts: int) -> "RngStream":
        return RngStream(self.seed, _mix((self.stream_id, *parts)))


def as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    """Accept either a stream name or an already-instantiated generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise ValueError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


def open_uniform(gen: np.random.Generator, size) -> np.ndarray:
    """Uniform draws on the open interval (0, 1): exact zeros are redrawn."""
    u = gen.random(size)
    if u.ndim == 0:
        while u == 0.0:
            u = gen.random(size)
        return u
    while True:
        zeros = u == 0.0
        if not zeros.any():
            return u
        u[zeros] = gen.random(int(zeros.sum()))
