"""Counter-based seed derivation.

Every random draw is keyed by (run seed, purpose tag, integer counters), fed
to :class:`numpy.random.SeedSequence` as entropy. A work unit's stream thus
depends only on its own key, never on execution order or thread count.
Fractions enter the key as round(f * 1e6).
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import InvalidArgument


def _key(v) -> int:
    if isinstance(v, str):
        return zlib.crc32(v.encode())
    if isinstance(v, float):
        return int(round(v * 1_000_000))
    return int(v)


def rng_for(seed: int, tag: str, *counters) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, _key(tag), *(_key(c) for c in counters)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def subset_indices(n: int, fraction: float, seed: int, repetition: int = 0) -> np.ndarray:
    """Sorted uniform sample of round(fraction * n) indices from range(n).

    fraction == 1 returns every index without consuming randomness.
    """
    if not 0 < fraction <= 1:
        raise InvalidArgument(f"fraction must be in (0, 1], got {fraction}")
    size = int(round(fraction * n))
    if size >= n:
        return np.arange(n)
    rng = rng_for(seed, "subset", fraction, repetition)
    return np.sort(rng.choice(n, size, replace=False))
