"""Seed-stream derivation.

Every random stream in the package is addressed by a master seed plus a
path of small integers or labels (check id, replica, component, ...), so no
two consumers ever share a stream and results do not depend on how work is
split across workers.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["derive_seed_sequence", "derive_rng", "label_key"]


def label_key(label) -> int:
    """Stable 32-bit integer for a string label (``hash`` is salted per process)."""
    if isinstance(label, (int, np.integer)):
        return int(label)
    return zlib.crc32(str(label).encode())


def derive_seed_sequence(master_seed: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master_seed) & ((1 << 64) - 1),
                                  spawn_key=tuple(label_key(p) for p in path))


def derive_rng(master_seed: int, *path) -> np.random.Generator:
    """Independent PCG64 generator for ``(master_seed, *path)``."""
    return np.random.Generator(np.random.PCG64(derive_seed_sequence(master_seed, *path)))
