"""Feature hashing: MurmurHash3 (x86, 32-bit) and signed-bucket accumulation.

The hash is pinned so that vectors are reproducible across processes and
ports: tokens are UTF-8 encoded, hashed with seed 0, reinterpreted as a
signed 32-bit integer; the bucket is ``abs(h) % bins`` and the contribution
sign is the sign of ``h`` (zero counts as positive).
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

_MASK32 = 0xFFFFFFFF
_C1 = 0xCC9E2D51
_C2 = 0x1B873593


def murmur3_32(data: bytes | str, seed: int = 0) -> int:
    """MurmurHash3 x86 32-bit of ``data`` under ``seed``, as an unsigned int.

    Strings are UTF-8 encoded first. Blocks are read little-endian.
    """
    if isinstance(data, str):
        data = data.encode("utf-8")
    n = len(data)
    h = seed & _MASK32

    nblocks = n & ~3
    for i in range(0, nblocks, 4):
        k = int.from_bytes(data[i : i + 4], "little")
        k = (k * _C1) & _MASK32
        k = ((k << 15) | (k >> 17)) & _MASK32
        k = (k * _C2) & _MASK32
        h ^= k
        h = ((h << 13) | (h >> 19)) & _MASK32
        h = (h * 5 + 0xE6546B64) & _MASK32

    tail = data[nblocks:]
    k = 0
    if len(tail) == 3:
        k ^= tail[2] << 16
    if len(tail) >= 2:
        k ^= tail[1] << 8
    if len(tail) >= 1:
        k ^= tail[0]
        k = (k * _C1) & _MASK32
        k = ((k << 15) | (k >> 17)) & _MASK32
        k = (k * _C2) & _MASK32
        h ^= k

    h ^= n
    h ^= h >> 16
    h = (h * 0x85EBCA6B) & _MASK32
    h ^= h >> 13
    h = (h * 0xC2B2AE35) & _MASK32
    h ^= h >> 16
    return h


@lru_cache(maxsize=1 << 16)
def _signed_hash(token: str) -> int:
    """Seed-0 hash of a token reinterpreted as signed 32-bit."""
    h = murmur3_32(token, 0)
    return h - (1 << 32) if h >= (1 << 31) else h


def token_bucket(token: str, bins: int) -> tuple[int, float]:
    """Map a token to its (bucket index, contribution sign)."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    h = _signed_hash(token)
    return abs(h) % bins, (1.0 if h >= 0 else -1.0)


def hash_pairs(pairs: Iterable[tuple[str, float]], bins: int) -> np.ndarray:
    """Accumulate (token, weight) pairs into a signed hash sketch.

    Each pair lands in exactly one of ``bins`` buckets with contribution
    ``sign(h) * weight``. Returns a float64 array of length ``bins``.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    out = np.zeros(bins, dtype=np.float64)
    for token, weight in pairs:
        idx, sign = token_bucket(token, bins)
        out[idx] += sign * weight
    return out


def hash_strings(tokens: Sequence[str], bins: int) -> np.ndarray:
    """Hash presence tokens (weight 1 each) into ``bins`` buckets."""
    return hash_pairs(((t, 1.0) for t in tokens), bins)
