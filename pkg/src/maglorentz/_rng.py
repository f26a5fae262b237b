"""Counter-based random stream derivation.

Every stochastic component of the toolkit draws from a Philox generator
whose 128-bit key is a pure function of (experiment seed, stream tag,
indices).  Results are therefore reproducible bit for bit regardless of
evaluation order or worker count.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# distinct stream tags, one per consumer
STREAM_FIELD_CELL = 0x01
STREAM_START = 0x02
STREAM_GB_PATH = 0x03
STREAM_GK_BLOCK = 0x04
STREAM_ANNULUS = 0x05
STREAM_CIRCLING = 0x06


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def mix(*parts: int) -> int:
    """Fold integers (of either sign) into a single 64-bit hash."""
    h = 0x243F6A8885A308D3
    for p in parts:
        h = splitmix64(h ^ (int(p) & _MASK64))
    return h


def philox_key(*parts: int) -> int:
    """Derive a 128-bit Philox key from the given integers."""
    hi = mix(*parts, 0x9E3779B9)
    lo = mix(*parts, 0x85EBCA6B)
    return (hi << 64) | lo


def generator(*parts: int) -> np.random.Generator:
    """A fresh Generator keyed by the given integers."""
    return np.random.Generator(np.random.Philox(key=philox_key(*parts)))
