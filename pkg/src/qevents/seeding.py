"""Deterministic random streams.

All sampling in the package draws from counter-based Philox generators keyed
by (seed, stream).  Distinct streams are statistically independent, and a
given key always reproduces the same draws, which is what makes command-line
outputs byte-identical run to run.
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream"]


def substream(seed: int, stream: int = 0) -> np.random.Generator:
    key = np.array([int(seed) % (1 << 64), int(stream) % (1 << 64)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
