"""Seeded, splittable random streams.

Every stochastic routine in the package draws from a stream keyed by
(master seed, purpose tags...). Streams with distinct tags are independent,
and a given key always reproduces the same draws, which is what makes
chunked and nested simulations replayable.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "spawn_key"]


def _tag_words(tag) -> tuple[int, ...]:
    # Strings are hashed so arbitrary labels map to stable 32-bit words.
    if isinstance(tag, str):
        digest = hashlib.sha256(tag.encode("utf-8")).digest()
        return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 8, 4))
    if isinstance(tag, (int, np.integer)):
        value = int(tag)
        if value < 0:
            raise ValueError("integer stream tags must be nonnegative")
        words = []
        while True:
            words.append(value & 0xFFFFFFFF)
            value >>= 32
            if value == 0:
                return tuple(words)
    raise TypeError(f"unsupported stream tag type: {type(tag).__name__}")


def spawn_key(*tags) -> tuple[int, ...]:
    """Flatten tags (ints or strings) into a SeedSequence spawn key."""
    key: list[int] = []
    for tag in tags:
        key.extend(_tag_words(tag))
    return tuple(key)


def stream(master_seed: int, *tags) -> np.random.Generator:
    """Independent generator keyed by (master_seed, *tags)."""
    seq = np.random.SeedSequence(master_seed, spawn_key=spawn_key(*tags))
    return np.random.Generator(np.random.PCG64(seq))
