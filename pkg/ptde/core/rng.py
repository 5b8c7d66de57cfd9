# Seedable, splittable random number streams
#
# Algorithm: numpy's PCG64 bit generator seeded through a SeedSequence. PCG64 output is
# specified independently of platform and numpy build, so equal seeds give bitwise-equal
# streams everywhere. A child stream k of a stream with seed s and spawn key (k0, ..., kn)
# is seeded by SeedSequence(s, spawn_key=(k0, ..., kn, k)); children never depend on how
# many numbers the parent has already drawn.

from typing import Optional, Sequence, Tuple

import numpy as np


class Rng:
    """Deterministic random stream with a documented split rule."""

    def __init__(self, seed: int, spawn_key: Tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.spawn_key = tuple(int(k) for k in spawn_key)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def split(self, key: int) -> "Rng":
        """Independent child stream identified by ``key``."""
        return Rng(self.seed, self.spawn_key + (int(key),))

    def splits(self, n: int, offset: int = 0) -> list:
        return [self.split(offset + i) for i in range(n)]

    @property
    def state(self) -> dict:
        return self._generator.bit_generator.state

    # Draws

    def normal(self, size=None, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self._generator.normal(loc, scale, size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None) -> np.ndarray:
        return self._generator.uniform(low, high, size)

    def random(self, size=None):
        return self._generator.random(size)

    def integers(self, low: int, high: Optional[int] = None, size=None):
        return self._generator.integers(low, high, size)

    def choice(self, a, size=None, replace: bool = True, p: Optional[Sequence[float]] = None):
        return self._generator.choice(a, size=size, replace=replace, p=p)

    def permutation(self, n):
        return self._generator.permutation(n)

    def categorical(self, probs: np.ndarray) -> np.ndarray:
        """Sample one index per row of a [..., k] probability array by inverse CDF."""
        cdf = np.cumsum(probs, axis=-1)
        u = self._generator.random(probs.shape[:-1] + (1,))
        return np.minimum((u * cdf[..., -1:] > cdf).sum(axis=-1), probs.shape[-1] - 1)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, spawn_key={self.spawn_key})"
