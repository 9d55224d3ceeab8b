"""Seeded random streams.

Every stream is a Philox4x64-10 counter-based generator keyed through
numpy's SeedSequence with ``entropy=seed`` and ``spawn_key=keys``. Distinct
key tuples give statistically independent streams, so per-sample and
per-epoch draws never depend on evaluation order or thread scheduling.
"""
from __future__ import annotations

import numpy as np

PRNG_NAME = "philox4x64-10+seedsequence/v1"


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seeds are unsigned 64-bit integers")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
