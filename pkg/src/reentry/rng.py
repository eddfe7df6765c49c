"""Deterministic random-stream derivation.

All randomness in the toolkit flows from a single 64-bit master seed.
Named substreams are derived with a splitmix64 finalizer over the master
seed combined with FNV-1a hashes of string labels (and raw integers for
indices).  The derivation is documented so ports in other languages can
reproduce classifications statistically; bit-identical streams are only
promised within this implementation (numpy PCG64 underneath).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(state: int) -> int:
    """One output of the splitmix64 generator for the given state."""
    z = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fnv1a64(text: str) -> int:
    """FNV-1a hash of a label, used to turn stream names into integers."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def derive_seed(master: int, *labels: str | int) -> int:
    """Fold labels into the master seed, one splitmix64 round per label."""
    state = master & _MASK64
    for label in labels:
        key = fnv1a64(label) if isinstance(label, str) else int(label) & _MASK64
        state = splitmix64(state ^ key)
    return state


def stream(master: int, *labels: str | int) -> np.random.Generator:
    """A numpy Generator for the named substream of the master seed."""
    return np.random.default_rng(np.random.PCG64(derive_seed(master, *labels)))
