"""Named, splittable random streams derived from one root seed."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

# Learners are sampled in fixed-size blocks, each from its own substream, so
# results depend only on (seed, path, N) and never on scheduling.
BLOCK = 65536


def _encode(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("substream indices must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode()).digest()
    return int.from_bytes(digest[:4], "little") | (1 << 32)


@dataclass(frozen=True)
class Rng:
    seed: int
    path: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))

    def child(self, *keys) -> "Rng":
        return Rng(self.seed, self.path + tuple(keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=tuple(_encode(k) for k in self.path))
        return np.random.Generator(np.random.PCG64(seq))

    def blocks(self, n: int):
        """Yield ``(start, stop, generator)`` covering ``range(n)``."""
        for b, start in enumerate(range(0, n, BLOCK)):
            yield start, min(start + BLOCK, n), self.child("block", b).generator()


def as_rng(rng) -> Rng:
    if isinstance(rng, Rng):
        return rng
    if rng is None:
        return Rng(0)
    return Rng(int(rng))
