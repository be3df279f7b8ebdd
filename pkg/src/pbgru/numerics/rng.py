"""Seeded random streams.

PCG64 bit streams are specified independently of platform, so a given seed
reproduces the same draws everywhere. Independent sub-streams are derived by
name so that, e.g., adding a dropout draw never shifts the shuffle order.
"""

from __future__ import annotations

import hashlib

import numpy as np


class Rng:
    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, name: str) -> "Rng":
        digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
        return Rng(int.from_bytes(digest[:8], "little"))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def random(self, size=None) -> np.ndarray:
        return self._gen.random(size)

    def poisson(self, lam, size=None) -> np.ndarray:
        return self._gen.poisson(lam, size)

    def multinomial(self, n: int, pvals) -> np.ndarray:
        return self._gen.multinomial(n, pvals)

    def integers(self, low: int, high: int | None = None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace: bool = True, p=None):
        return self._gen.choice(a, size=size, replace=replace, p=p)

    def bernoulli_mask(self, keep: float, shape) -> np.ndarray:
        return (self._gen.random(shape) < keep).astype(np.float64)
