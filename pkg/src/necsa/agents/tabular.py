from __future__ import annotations

import numpy as np

from .replay import Batch
from .td3 import AgentConfig


class TabularQAgent:
    """Epsilon-greedy Q-learning over integer states; random tie-breaking while exploring."""

    def __init__(self, n_states: int, n_actions: int, config: AgentConfig | None = None, seed: int = 0):
        self.config = config or AgentConfig()
        self.n_states = n_states
        self.n_actions = n_actions
        self.Q = np.zeros((n_states, n_actions))
        self.rng = np.random.default_rng(seed)
        self.updates = 0

    def _index(self, s) -> int:
        return int(np.asarray(s).reshape(-1)[0])

    def greedy(self, s) -> int:
        return int(np.argmax(self.Q[self._index(s)]))

    def act(self, s, explore: bool = False) -> np.ndarray:
        if explore:
            if self.rng.random() < self.config.explore_rate:
                a = int(self.rng.integers(self.n_actions))
            else:
                row = self.Q[self._index(s)]
                best = np.flatnonzero(row == row.max())
                a = int(best[self.rng.integers(len(best))]) if len(best) > 1 else int(best[0])
        else:
            a = self.greedy(s)
        return np.array([float(a)])

    def random_action(self) -> np.ndarray:
        return np.array([float(self.rng.integers(self.n_actions))])

    def q_estimate(self, s, a) -> float:
        return float(self.Q[self._index(s), self._index(a)])

    def tabular_update(self, s, a, r: float, s_next, done: bool) -> None:
        cfg = self.config
        i, j = self._index(s), self._index(a)
        bootstrap = 0.0 if done else cfg.gamma * float(self.Q[self._index(s_next)].max())
        self.Q[i, j] += cfg.alpha * (r + bootstrap - self.Q[i, j])

    def update(self, batch: Batch) -> dict:
        """One Q-learning step per sampled transition, all against the pre-batch table."""
        cfg = self.config
        i = batch.s[:, 0].astype(np.int64)
        j = batch.a[:, 0].astype(np.int64)
        k = batch.s_next[:, 0].astype(np.int64)
        target = batch.r + cfg.gamma * (1.0 - batch.done) * self.Q[k].max(axis=1)
        np.add.at(self.Q, (i, j), cfg.alpha * (target - self.Q[i, j]))
        self.updates += 1
        return {}
