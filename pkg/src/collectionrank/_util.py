"""Small shared helpers: deterministic hashing, seeding, canonical float text."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """Deterministic 64-bit mixer (independent of PYTHONHASHSEED)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def stable_hash(x: int, salt: int = 0) -> int:
    return splitmix64(splitmix64(salt) ^ (x & _MASK64))


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """A generator for a named substream, deterministic in (seed, stream)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


def float_repr(x: float) -> str:
    """Shortest decimal text that round-trips to the same float64."""
    return repr(float(x))
