"""Deterministic RNG derivation.

Every stochastic component draws from a Generator derived from the experiment
seed plus a stable stream label, so independent components never share or
reorder draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def derive_rng(seed: int, *keys: int | str) -> np.random.Generator:
    """Return a Generator for the stream identified by (seed, *keys).

    String keys are hashed with crc32, which is stable across platforms and
    processes (unlike ``hash``).
    """
    entropy = [int(seed) & 0xFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            entropy.append(zlib.crc32(key.encode("utf-8")))
        else:
            entropy.append(int(key) & 0xFFFFFFFF)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *keys: int | str) -> int:
    """A stable integer seed for the stream identified by (seed, *keys)."""
    return int(derive_rng(seed, *keys).integers(0, 2**31 - 1))
