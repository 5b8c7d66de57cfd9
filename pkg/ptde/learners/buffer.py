# Episode replay buffer

from dataclasses import fields
from typing import Dict, Optional

import numpy as np

from ..core.rng import Rng
from .episode import EpisodeBatch


class ReplayBuffer:
    """
    Ring buffer of whole episodes with uniform sampling.

    Storage is allocated from the first inserted batch. An episode becomes visible to
    ``sample`` only after all of its fields are written.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least one episode")
        self.capacity = capacity
        self._data: Dict[str, Optional[np.ndarray]] = {}
        self._next = 0
        self._count = 0

    def __len__(self) -> int:
        return self._count

    def _allocate(self, batch: EpisodeBatch) -> None:
        for f in fields(EpisodeBatch):
            value = getattr(batch, f.name)
            shape = None if value is None else (self.capacity,) + value.shape[1:]
            self._data[f.name] = None if value is None else np.zeros(shape, dtype=value.dtype)

    def insert(self, batch: EpisodeBatch) -> None:
        if not self._data:
            self._allocate(batch)
        for b in range(batch.batch_size):
            slot = self._next
            for name, storage in self._data.items():
                if storage is not None:
                    storage[slot] = getattr(batch, name)[b]
            self._next = (slot + 1) % self.capacity
            self._count = min(self._count + 1, self.capacity)

    def can_sample(self, batch_size: int) -> bool:
        return self._count >= batch_size

    def sample_indices(self, batch_size: int, rng: Rng) -> np.ndarray:
        """Uniform draw of distinct stored slots."""
        if not self.can_sample(batch_size):
            raise ValueError(f"cannot sample {batch_size} episodes from a buffer holding {self._count}")
        return np.asarray(rng.choice(self._count, size=batch_size, replace=False), dtype=np.int64)

    def sample(self, batch_size: int, rng: Rng) -> EpisodeBatch:
        """Uniformly sampled episodes, trimmed to the longest one among them."""
        indices = self.sample_indices(batch_size, rng)
        batch = EpisodeBatch(
            **{name: None if storage is None else storage[indices] for name, storage in self._data.items()}
        )
        return batch.truncate(int(batch.lengths.max()))
