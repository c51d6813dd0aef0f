"""Deterministic, order-independent seeding.

Every random stream in covfest is a Philox4x64 counter-based generator keyed
by a 64-bit value.  Keys for sub-streams are derived with :func:`mix`, which
folds integer indices into a master seed using the SplitMix64 finalizer::

    h = splitmix64(seed)
    for i in indices:
        h = splitmix64(h ^ splitmix64(i + GOLDEN))

so the stream for replication ``i`` never depends on how many replications
ran before it or on which worker ran it.
"""

from __future__ import annotations

import numpy as np

GENERATOR_ID = "philox4x64-10"

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix(seed: int, *indices: int) -> int:
    """Derive a 64-bit key from ``seed`` and a path of non-negative indices."""
    h = splitmix64(int(seed) & _MASK)
    for i in indices:
        h = splitmix64(h ^ splitmix64((int(i) + _GOLDEN) & _MASK))
    return h


def generator(seed: int, *indices: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=mix(seed, *indices)))
