"""Deterministic random-stream derivation.

Every stochastic stage derives its generator from the single master seed plus
a structured integer path (stage tag, then indices such as datapoint, probe,
instance).  Two runs with the same master seed and the same path draw the
same numbers; distinct paths give statistically independent streams.  This is
numpy's SeedSequence spawn-key mechanism, nothing home-grown.
"""

from __future__ import annotations

import numpy as np

# stage tags; fixed forever so cached artifacts stay reproducible
STAGE_DATAGEN = 1
STAGE_SHOTS = 2
STAGE_NOISE = 3
STAGE_INSTANCE = 4
STAGE_GEOMETRY = 5
STAGE_SPLIT = 6
STAGE_LEARNER = 7
STAGE_RESAMPLE = 8


def seed_sequence_for(master_seed: int, *path: int) -> np.random.SeedSequence:
    """SeedSequence for a stage path under the master seed."""
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    return np.random.SeedSequence(master_seed, spawn_key=tuple(int(p) for p in path))


def rng_for(master_seed: int, *path: int) -> np.random.Generator:
    """Generator for a stage path under the master seed."""
    return np.random.default_rng(seed_sequence_for(master_seed, *path))
