"""Deterministic random-stream derivation.

All randomness in the package flows through numpy's PCG64 generator seeded
from an explicit 64-bit integer.  Independent sub-streams (per trial, per
frame, per noise draw) are derived by counter splitting with
``numpy.random.SeedSequence`` spawn keys, so reruns with the same root seed
are byte-identical and streams never alias each other.
"""

from __future__ import annotations

import numpy as np

__all__ = ["rng_from", "child_seed"]


def rng_from(seed: int, *key: int) -> np.random.Generator:
    """Return a PCG64 generator for stream ``key`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(key)))


def child_seed(seed: int, *key: int) -> int:
    """Derive a 64-bit child seed for stream ``key`` under ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
