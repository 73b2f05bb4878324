"""Seed derivation: every stream is a Philox generator keyed by a root seed and tags."""
from __future__ import annotations

import hashlib

import numpy as np


def tag_int(tag) -> int:
    """Integers pass through; strings hash to a stable 32-bit value."""
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    digest = hashlib.sha256(str(tag).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(seed: int, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=tuple(tag_int(t) for t in tags))


def make_rng(seed: int, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *tags)))


def spawn(seed: int, tag, n: int) -> list[np.random.Generator]:
    """``n`` independent streams ``(seed, tag, 0..n-1)``."""
    return [make_rng(seed, tag, i) for i in range(n)]
