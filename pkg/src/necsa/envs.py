"""Small seeded environments with sparse rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["EnvSpec", "SparsePointMass", "SparseMountainCar", "ChainMDP", "make_env", "ENVS"]


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    n_actions: int
    state_lower: tuple[float, ...]
    state_upper: tuple[float, ...]
    action_lower: tuple[float, ...]
    action_upper: tuple[float, ...]
    max_steps: int
    reward: str
    threshold: float

    @property
    def discrete(self) -> bool:
        return self.n_actions > 0


class _Env:
    spec: EnvSpec

    def __init__(self):
        self.rng = np.random.default_rng(0)
        self.t = 0
        self.done = True
        self.terminal = False

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.t = 0
        self.done = False
        self.terminal = False
        return self._reset()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        state, reward, terminal = self._step(action)
        self.t += 1
        self.terminal = terminal
        self.done = terminal or self.t >= self.spec.max_steps
        return state, reward, self.done

    @property
    def truncated(self) -> bool:
        """True when the episode ended on the horizon rather than a terminal state."""
        return self.done and not self.terminal

    def _reset(self) -> np.ndarray:
        raise NotImplementedError

    def _step(self, action) -> tuple[np.ndarray, float, bool]:
        raise NotImplementedError

    def _clip_action(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.float64).reshape(self.spec.action_dim)
        return np.clip(a, self.spec.action_lower, self.spec.action_upper)


class SparsePointMass(_Env):
    """2-D point mass; +1 and termination inside a radius-0.1 disk around (0.9, 0.9)."""

    spec = EnvSpec(
        name="sparse_point_mass", state_dim=4, action_dim=2, n_actions=0,
        state_lower=(-1.0,) * 4, state_upper=(1.0,) * 4,
        action_lower=(-0.1,) * 2, action_upper=(0.1,) * 2,
        max_steps=200, reward="sparse", threshold=0.8,
    )
    goal = np.array([0.9, 0.9])
    goal_radius = 0.1

    def _reset(self):
        self.pos = np.array([-0.9, -0.9]) + self.rng.uniform(-0.02, 0.02, size=2)
        self.vel = np.zeros(2)
        return self._obs()

    def _obs(self):
        return np.concatenate([self.pos, self.vel])

    def _step(self, action):
        a = self._clip_action(action)
        self.vel = np.clip(0.95 * self.vel + a, -1.0, 1.0)
        self.pos = np.clip(self.pos + self.vel, -1.0, 1.0)
        reached = bool(np.linalg.norm(self.pos - self.goal) < self.goal_radius)
        return self._obs(), (1.0 if reached else 0.0), reached


class SparseMountainCar(_Env):
    """Continuous mountain car with a step cost of 0.01 and +10 at the goal."""

    spec = EnvSpec(
        name="sparse_mountain_car", state_dim=2, action_dim=1, n_actions=0,
        state_lower=(-1.2, -0.07), state_upper=(0.6, 0.07),
        action_lower=(-1.0,), action_upper=(1.0,),
        max_steps=500, reward="sparse", threshold=5.0,
    )
    goal_position = 0.45

    def _reset(self):
        self.position = float(self.rng.uniform(-0.6, -0.4))
        self.velocity = 0.0
        return np.array([self.position, self.velocity])

    def _step(self, action):
        force = float(self._clip_action(action)[0])
        v = self.velocity + 0.001 * force - 0.0025 * np.cos(3.0 * self.position)
        v = float(np.clip(v, -0.07, 0.07))
        p = float(np.clip(self.position + v, -1.2, 0.6))
        if p <= -1.2 and v < 0:
            v = 0.0
        self.position, self.velocity = p, v
        reached = p >= self.goal_position
        reward = -0.01 + (10.0 if reached else 0.0)
        return np.array([p, v]), reward, reached


class ChainMDP(_Env):
    """States 0..L-1; 'right' advances with probability 0.9 (else stays), 'left' steps back.

    Reward 1 on entering the absorbing state L-1.
    """

    LEFT, RIGHT = 0, 1

    def __init__(self, length: int = 20, max_steps: int = 100, p_right: float = 0.9):
        super().__init__()
        if length < 2:
            raise ValueError("chain length must be at least 2")
        self.length = length
        self.p_right = p_right
        self.spec = EnvSpec(
            name="chain_mdp", state_dim=1, action_dim=1, n_actions=2,
            state_lower=(0.0,), state_upper=(float(length - 1),),
            action_lower=(0.0,), action_upper=(1.0,),
            max_steps=max_steps, reward="sparse", threshold=0.8,
        )

    def _reset(self):
        self.s = 0
        return np.array([float(self.s)])

    def _step(self, action):
        a = int(np.asarray(action).reshape(-1)[0]) if np.ndim(action) else int(action)
        if a not in (self.LEFT, self.RIGHT):
            raise ValueError(f"action index {a} out of range for 2 actions")
        if a == self.RIGHT:
            if self.rng.random() < self.p_right:
                self.s = min(self.s + 1, self.length - 1)
        else:
            self.s = max(self.s - 1, 0)
        reached = self.s == self.length - 1
        return np.array([float(self.s)]), (1.0 if reached else 0.0), reached


ENVS = {
    "sparse_point_mass": SparsePointMass,
    "sparse_mountain_car": SparseMountainCar,
    "chain_mdp": ChainMDP,
}


def make_env(name: str) -> _Env:
    try:
        return ENVS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None
