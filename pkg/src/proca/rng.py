"""Deterministic, splittable random streams.

Every random draw in the package comes from an ``RngStream``, a counter-based
generator built on the SplitMix64 finalizer.  A stream is fully determined by
its ``(seed, label)`` pair, so the same pair yields the same sequence on any
platform and any backend, and distinct labels under one seed give independent
streams.  Exact constants (all 64-bit):

    SplitMix64 increment  0x9E3779B97F4A7C15
    SplitMix64 mixers     0xBF58476D1CE4E5B9, 0x94D049BB133111EB
    FNV-1a offset basis   0xCBF29CE484222325
    FNV-1a prime          0x00000100000001B3

The label is hashed with FNV-1a and mixed into the seed; child streams append
"/label" path segments, so ``RngStream(7, "run").child("step1")`` equals
``RngStream(7, "run/step1")``.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_SPLITMIX_INC = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3

_INV_2_53 = 2.0 ** -53


def _mix64(z: int) -> int:
    z &= _MASK64
    z ^= z >> 30
    z = (z * _MIX1) & _MASK64
    z ^= z >> 27
    z = (z * _MIX2) & _MASK64
    z ^= z >> 31
    return z


def _fnv1a(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


class RngStream:
    """Counter-based random stream identified by a seed and a label."""

    def __init__(self, seed: int, label: str = ""):
        self.seed = int(seed) & _MASK64
        self.label = label
        self._base = _mix64(self.seed ^ _fnv1a(label))
        self._count = 0
        self._spare_normal: float | None = None

    def child(self, label: str) -> "RngStream":
        """Independent stream derived from this one's seed and label path."""
        joined = f"{self.label}/{label}" if self.label else label
        return RngStream(self.seed, joined)

    def next_u64(self) -> int:
        self._count += 1
        return _mix64((self._base + self._count * _SPLITMIX_INC) & _MASK64)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform(self, low: float, high: float, size=None):
        if size is None:
            return low + (high - low) * self.random()
        n = int(np.prod(size))
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = low + (high - low) * self.random()
        return out.reshape(size)

    def normal(self, size=None):
        """Standard normal draws via Box-Muller (spare value cached)."""
        if size is None:
            return self._next_normal()
        n = int(np.prod(size))
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self._next_normal()
        return out.reshape(size)

    def _next_normal(self) -> float:
        if self._spare_normal is not None:
            z = self._spare_normal
            self._spare_normal = None
            return z
        # u1 shifted into (0, 1] so log never sees zero
        u1 = ((self.next_u64() >> 11) + 1) * _INV_2_53
        u2 = (self.next_u64() >> 11) * _INV_2_53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_normal = r * math.sin(theta)
        return r * math.cos(theta)

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of 0..n-1."""
        out = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            out[i], out[j] = out[j], out[i]
        return out
