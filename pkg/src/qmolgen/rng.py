"""Deterministic, purpose-keyed random number streams.

Every stochastic component draws from its own stream derived from
``(seed, purpose, index)`` so that reordering or parallelising work cannot
change the numbers any single component sees.
"""

from __future__ import annotations

import zlib

import numpy as np


def rng_for(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Return a Generator keyed on (seed, purpose, index).

    The purpose string is folded to a stable 32-bit value with crc32 so the
    stream does not depend on Python's per-process string hashing.
    """
    key = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, key, int(index) & 0xFFFFFFFF])
    return np.random.default_rng(ss)


def rademacher(rng: np.random.Generator, size: int) -> np.ndarray:
    """Vector of +/-1 with equal probability."""
    return rng.integers(0, 2, size=size).astype(np.float64) * 2.0 - 1.0
