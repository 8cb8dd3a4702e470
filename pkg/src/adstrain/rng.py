"""Seedable random streams.

All randomness goes through :func:`make_rng`, which builds a numpy
``Generator`` on the counter-based Philox-4x64 bit generator. Streams are keyed
by ``(seed, *names)``; names are hashed with BLAKE2b so that independent
components (per-table sampling, fault schedules, read service times) never
share a stream. Given the same key, output is identical across platforms.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def _name_word(name):
    if isinstance(name, (int, np.integer)):
        return int(name) & MASK64
    digest = hashlib.blake2b(str(name).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed, *names):
    """Return a Philox-backed ``numpy.random.Generator`` for the given stream key."""
    words = [int(seed) & MASK64] + [_name_word(n) for n in names]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def splitmix64(x, seed=0):
    """Vectorized SplitMix64 finalizer; the fixed hash behind ``random_hash`` row placement."""
    with np.errstate(over="ignore"):
        z = (np.asarray(x, dtype=np.uint64) ^ np.uint64(seed & MASK64)) + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))
