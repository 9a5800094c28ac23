"""Seeded random streams that are stable across platforms and numpy versions.

Every draw comes from the raw 64-bit output of the PCG64 bit generator,
keyed by ``SeedSequence(seed, spawn_key=(stream,))``.  Both are covered by
numpy's stream-compatibility guarantee, unlike the ``Generator`` sampling
methods, so the conversions to floats and bounded integers are done here.
"""

from __future__ import annotations

import numpy as np

# Named stream ids keep the different consumers of one seed independent.
STREAM_SPLIT = 0
STREAM_SCENE = 1
STREAM_TRANSITIONS = 2
STREAM_NOISE = 3
STREAM_NOISE_CLASS = 4
STREAM_MISC = 5


def _bitgen(seed: int, stream: int) -> np.random.PCG64:
    return np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream),)))


def uniforms(seed: int, n: int, stream: int = STREAM_MISC) -> np.ndarray:
    """``n`` doubles in [0, 1) built from the top 53 bits of each raw draw."""
    raw = _bitgen(seed, stream).random_raw(int(n))
    return (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def permutation(n: int, seed: int, stream: int = STREAM_SPLIT) -> list[int]:
    """Fisher-Yates shuffle of ``range(n)`` with unbiased bounded integers."""
    bg = _bitgen(seed, stream)
    items = list(range(n))
    for i in range(n - 1, 0, -1):
        bound = i + 1
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = int(bg.random_raw())
            if r < limit:
                break
        j = r % bound
        items[i], items[j] = items[j], items[i]
    return items
