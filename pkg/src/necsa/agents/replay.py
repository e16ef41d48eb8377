from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray


class ReplayBuffer:
    """FIFO ring buffer of (s, a, r, s', done) with seeded uniform sampling.

    ``done`` here is the bootstrap mask: 1 only for true terminal states,
    not for horizon cut-offs.
    """

    def __init__(self, state_dim: int, action_dim: int, capacity: int = 100_000, seed: int = 0):
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.ptr = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self.size

    def add(self, s, a, r: float, s_next, done: bool) -> None:
        i = self.ptr
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s_next[i] = s_next
        self.done[i] = float(done)
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> Batch:
        if self.size < batch_size:
            raise ValueError(f"cannot sample {batch_size} from a buffer holding {self.size}")
        idx = self.rng.integers(0, self.size, size=batch_size)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx])

    def rewards_in_order(self) -> np.ndarray:
        """Stored rewards oldest first."""
        if self.size < self.capacity:
            return self.r[: self.size].copy()
        return np.concatenate([self.r[self.ptr:], self.r[: self.ptr]])
