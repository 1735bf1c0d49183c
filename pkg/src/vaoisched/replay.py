"""FIFO experience replay with uniform with-replacement sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Batch:
    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    vaoi_sums: np.ndarray

    def __len__(self) -> int:
        return self.states.shape[0]


class ReplayBuffer:
    """Ring buffer over transitions.

    Rewards are stored as shaped at collection time; the raw (age-sum,
    cost) pair is stored alongside so rewards can optionally be re-shaped
    with a fresh multiplier at sample time. Storage grows geometrically up
    to the configured capacity, so an oversized capacity costs nothing
    until filled.
    """

    def __init__(self, capacity: int, n_users: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self.n_users = n_users
        self._allocated = 0
        self._size = 0
        self._pos = 0

    def _grow(self, need: int) -> None:
        new_alloc = min(self.capacity, max(need, 1024, self._allocated * 2))
        if self._allocated == 0:
            self.states = np.empty((new_alloc, self.n_users), dtype=np.float32)
            self.next_states = np.empty((new_alloc, self.n_users), dtype=np.float32)
            self.actions = np.empty(new_alloc, dtype=np.int64)
            self.rewards = np.empty(new_alloc, dtype=np.float32)
            self.costs = np.empty(new_alloc, dtype=np.float32)
            self.vaoi_sums = np.empty(new_alloc, dtype=np.float32)
        else:
            for name in ("states", "next_states", "actions", "rewards", "costs", "vaoi_sums"):
                arr = getattr(self, name)
                grown = np.empty((new_alloc,) + arr.shape[1:], dtype=arr.dtype)
                grown[: self._size] = arr[: self._size]
                setattr(self, name, grown)
        self._allocated = new_alloc

    def push(self, state, action: int, next_state, reward: float, cost: float, vaoi_sum: float) -> None:
        if self._pos >= self._allocated and self._allocated < self.capacity:
            self._grow(self._pos + 1)
        i = self._pos % self.capacity
        self.states[i] = state
        self.actions[i] = action
        self.next_states[i] = next_state
        self.rewards[i] = reward
        self.costs[i] = cost
        self.vaoi_sums[i] = vaoi_sum
        self._pos = (self._pos + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def __len__(self) -> int:
        return self._size

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform sampling with replacement; deterministic given rng state."""
        if self._size == 0:
            raise RuntimeError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(
            states=self.states[idx].copy(),
            actions=self.actions[idx].copy(),
            next_states=self.next_states[idx].copy(),
            rewards=self.rewards[idx].copy(),
            costs=self.costs[idx].copy(),
            vaoi_sums=self.vaoi_sums[idx].copy(),
        )
