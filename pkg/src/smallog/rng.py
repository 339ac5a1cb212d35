"""Deterministic, platform-independent randomness.

A SplitMix64 stream drives a Fisher-Yates shuffle over lexicographically
sorted items, so a given 64-bit seed produces the same shuffle on any
platform or runtime. Derived seeds are built from a SHA-256 based stable
hash, never from Python's salted ``hash``.
"""

from __future__ import annotations

import hashlib
from collections.abc import Iterable

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """64-bit SplitMix64 generator."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return (z ^ (z >> 31)) & _MASK64


def shuffled(items: Iterable[str], seed: int) -> list[str]:
    """Fisher-Yates shuffle of ``sorted(items)`` seeded with SplitMix64.

    Index choice is ``j = next_u64() mod (i + 1)`` for ``i`` from ``n - 1``
    down to 1; the tiny modulo bias is irrelevant here, reproducibility is
    the point.
    """
    order = sorted(items)
    rng = SplitMix64(seed)
    for i in range(len(order) - 1, 0, -1):
        j = rng.next_u64() % (i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def stable_hash64(text: str) -> int:
    """First 8 bytes of SHA-256, big endian. Stable across runs and platforms."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_seed(master: int, *parts: str) -> int:
    """One SplitMix64 step over ``master XOR stable_hash64(joined parts)``."""
    mixed = (master & _MASK64) ^ stable_hash64("\x1f".join(parts))
    return SplitMix64(mixed).next_u64()
