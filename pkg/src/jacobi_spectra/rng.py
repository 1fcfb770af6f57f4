"""Deterministic random-stream derivation.

Every stochastic routine in the package draws from a counter-based Philox
generator keyed by (seed, replica).  Distinct replicas get statistically
independent streams, and the derivation depends only on those two integers,
so results are reproducible bit-for-bit regardless of scheduling, thread
count, or the order replicas are run in.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, replica: int = 0) -> np.random.Generator:
    """Generator for one replica of an experiment keyed by `seed`."""
    seed = int(seed)
    replica = int(replica)
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    if replica < 0:
        raise ValueError("replica index must be non-negative")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(replica,))
    return np.random.Generator(np.random.Philox(ss))
