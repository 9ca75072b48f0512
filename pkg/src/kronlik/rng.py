"""Seeded random streams.

Every stochastic routine takes an integer master seed.  Replication ``k``
of a Monte Carlo run draws from ``PCG64(SeedSequence(seed, spawn_key=(k,)))``,
the same stream numpy's ``SeedSequence.spawn`` would hand out as child
``k``.  Streams therefore depend only on ``(seed, k)``, never on how the
replications are split across workers.
"""

from __future__ import annotations

import os
from typing import Optional

import numpy as np

SEED_ENV = "KRONLIK_SEED"


def replication_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


def master_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def resolve_seed(seed: Optional[int]) -> int:
    """Explicit seed, else ``$KRONLIK_SEED``, else 0."""
    if seed is not None:
        return int(seed)
    env = os.environ.get(SEED_ENV)
    return int(env) if env not in (None, "") else 0
