"""Deterministic, splittable random streams.

Every stochastic component draws from a Philox counter-based generator keyed
by ``(master_seed, *key)`` through :class:`numpy.random.SeedSequence`.  Streams
derived from distinct keys are statistically independent, and a given key
always reproduces the same stream regardless of process or thread layout.
"""

from __future__ import annotations

import numpy as np


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return the generator for ``(master_seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
