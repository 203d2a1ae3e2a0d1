"""Seeded random streams.

All randomness goes through Philox, numpy's counter-based bit generator,
keyed by a :class:`numpy.random.SeedSequence`. A stream is addressed by a
root seed plus a path of integers (replication index, chunk index, ...), so
independent sub-streams can be handed to workers without coordination and
results never depend on how the work was partitioned.
"""

from __future__ import annotations

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int, *path: int) -> np.random.Generator:
    """Return the Philox generator for ``seed`` at sub-stream ``path``."""
    ss = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, *path: int) -> int:
    """A 64-bit integer seed derived from ``seed`` and ``path``."""
    ss = np.random.SeedSequence(entropy=int(seed) & SEED_MASK, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
