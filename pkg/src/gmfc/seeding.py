"""Counter-based seed derivation.

Every random stream in an experiment is identified by ``(master_seed, *stream)``
where ``stream`` is a tuple of non-negative integers, e.g. ``(1, N, run)``.
The derived seed is the first 64-bit word produced by
``numpy.random.SeedSequence(master_seed, spawn_key=stream)``, so adding a new
stream never changes the value of an existing one.
"""

from __future__ import annotations

import numpy as np

SeedLike = int | np.random.Generator | None


def derive_seed(master: int, *stream: int) -> int:
    """Return a 64-bit seed for the stream ``stream`` under ``master``."""
    if master < 0 or any(k < 0 for k in stream):
        raise ValueError("seeds and stream indices must be non-negative")
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
