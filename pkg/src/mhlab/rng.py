"""Reproducible random streams.

All randomness in the package flows through counter-based Philox generators
keyed by a ``SeedSequence``.  Child streams are derived by spawning, which is
deterministic and independent of scheduling order, so parallel sweep workers
and batched Monte Carlo runs reproduce bit-for-bit regardless of how work is
dispatched.
"""

from __future__ import annotations

import numpy as np


def seed_sequence(seed, *path: int) -> np.random.SeedSequence:
    """Build a SeedSequence from a root seed and an optional spawn path."""
    if isinstance(seed, np.random.SeedSequence):
        if path:
            return np.random.SeedSequence(
                entropy=seed.entropy, spawn_key=tuple(seed.spawn_key) + tuple(path)
            )
        return seed
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(path))


def make_rng(seed, *path: int) -> np.random.Generator:
    """Philox generator for the given seed and spawn path."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *path)))


def split(seed, n: int, *path: int) -> list[np.random.SeedSequence]:
    """n independent child sequences; deterministic in (seed, path, n)."""
    return seed_sequence(seed, *path).spawn(n)
