"""Named random substreams derived from one master seed.

Each consumer (an agent, the registry, the fundamental process, the
scheduler) gets its own generator keyed by a stable hash of its name, so
adding a consumer never shifts the draws another one sees.
"""

from __future__ import annotations

import zlib
from typing import Dict

import numpy as np


def substream(master: int, name: str) -> np.random.Generator:
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([master, key])))


class Streams:
    def __init__(self, master: int) -> None:
        self.master = master
        self._cache: Dict[str, np.random.Generator] = {}

    def __getitem__(self, name: str) -> np.random.Generator:
        g = self._cache.get(name)
        if g is None:
            g = self._cache[name] = substream(self.master, name)
        return g

    def agent(self, agent_id: str) -> np.random.Generator:
        return self[f"agent:{agent_id}"]
