"""Named, reproducible random substreams.

Each stream is keyed by ``(master_seed, replication, tag)`` so results do not
depend on scheduling or on how many other streams were drawn first.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


def substream(master_seed: int, replication: int, tag: str) -> np.random.Generator:
    """Philox generator for one (replication, tag) pair."""
    key = zlib.crc32(tag.encode("utf-8"))
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication), key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Streams:
    master_seed: int
    replication: int = 0

    def generator(self, tag: str) -> np.random.Generator:
        return substream(self.master_seed, self.replication, tag)

    def for_replication(self, replication: int) -> "Streams":
        return Streams(self.master_seed, replication)
