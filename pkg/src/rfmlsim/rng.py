"""Seeded random substreams.

All randomness flows through :func:`substream`, which derives an independent
PCG64 generator from a root seed and a tuple of coordinates. Because the
stream for a trial depends only on its coordinates, trials can run in any
order or in parallel and still reproduce bit-for-bit.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_word(key) -> int:
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)) and key >= 0:
        return int(key)
    # floats, negative ints and strings hash through their canonical repr
    if isinstance(key, (float, np.floating)):
        key = repr(float(key))
    return zlib.crc32(str(key).encode("utf-8"))


def substream(seed: int, *keys) -> np.random.Generator:
    """Return a generator for ``(seed, *keys)``; equal inputs give equal streams."""
    words = tuple(_key_word(k) for k in keys)
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=words)
    return np.random.Generator(np.random.PCG64(ss))
