"""Deterministic random-stream handles for reproducible Monte Carlo.

Every stochastic routine in this package takes an explicit stream handle
(a ``numpy.random.Generator``).  Streams are derived from a root seed and
a path of integer keys, so that a parallel computation partitioned into
tasks gets the same numbers regardless of worker count or scheduling.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream", "substream"]


def stream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator identified by ``seed`` and an integer key path.

    The same (seed, path) always yields the same generator state; distinct
    paths yield statistically independent streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.PCG64(ss))


def substream(seed: int, path: tuple[int, ...], index: int) -> np.random.Generator:
    """Stream for task ``index`` inside the partition named by ``path``."""
    return stream(seed, *path, index)
