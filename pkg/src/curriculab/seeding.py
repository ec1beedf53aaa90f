"""Named random substreams.

Every random draw in a run comes from ``Streams(seed).generator(*key)``.
The key is a path such as ``("episode", iteration, episode_index)``; string
parts are mapped to integers with CRC32. Because an episode's stream
depends only on its key, splitting episodes across batches or worker
processes cannot change any result.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError(f"stream key parts must be non-negative, got {part}")
    return part


class Streams:
    def __init__(self, seed: int):
        self.seed = int(seed)

    def seed_sequence(self, *key) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=tuple(_key_part(k) for k in key))

    def generator(self, *key) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed_sequence(*key)))

    def __repr__(self) -> str:
        return f"Streams({self.seed})"
