"""Deterministic random streams.

Every stream is a Philox (counter-based, 64-bit) generator keyed by a
SeedSequence hash of ``(master_seed, *path)``.  Results therefore depend only
on the seed and the stream path, never on scheduling or thread count.
"""

from __future__ import annotations

import numpy as np

SEED_BOUND = 2**64


def stream(master_seed: int, *path: int) -> np.random.Generator:
    key = [int(master_seed) % SEED_BOUND, *(int(p) for p in path)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a fresh 63-bit seed from ``rng`` for a dependent stream."""
    return int(rng.integers(0, 2**63 - 1))
