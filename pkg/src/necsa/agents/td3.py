"""Deterministic actor-critic with target networks (TD3; DDPG with twin/delay switched off)."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .networks import MLP, Adam
from .replay import Batch


class DivergenceError(RuntimeError):
    pass


@dataclass
class AgentConfig:
    gamma: float = 0.99
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    tau: float = 0.005
    exploration_noise: float = 0.1
    twin: bool = True
    policy_delay: int = 2
    target_noise: float = 0.0
    target_noise_clip: float = 0.5
    hidden: int = 256
    batch_size: int = 100
    buffer_size: int = 100_000
    start_steps: int = 1000
    # tabular learner
    alpha: float = 0.1
    explore_rate: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.policy_delay < 1:
            raise ValueError("policy_delay must be >= 1")
        if self.batch_size < 1 or self.buffer_size < self.batch_size:
            raise ValueError("buffer_size must be at least batch_size >= 1")
        if self.hidden < 1:
            raise ValueError("hidden width must be positive")


class TD3Agent:
    """Actor-critic for continuous actions.

    Exploration noise and target smoothing noise are expressed as fractions
    of the action half-range.
    """

    def __init__(self, state_dim: int, action_low, action_high, config: AgentConfig | None = None, seed: int = 0):
        self.config = config or AgentConfig()
        cfg = self.config
        self.rng = np.random.default_rng(seed)
        self.low = np.asarray(action_low, dtype=np.float64)
        self.high = np.asarray(action_high, dtype=np.float64)
        self.half = (self.high - self.low) / 2
        self.state_dim = state_dim
        self.action_dim = self.low.shape[0]
        h = cfg.hidden
        self.actor = MLP([state_dim, h, h, self.action_dim], self.rng, output="tanh", low=self.low, high=self.high)
        n_critics = 2 if cfg.twin else 1
        self.critics = [MLP([state_dim + self.action_dim, h, h, 1], self.rng) for _ in range(n_critics)]
        self.actor_target = self.actor.copy()
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opt = Adam(self.actor.params, lr=cfg.actor_lr)
        self.critic_opts = [Adam(c.params, lr=cfg.critic_lr) for c in self.critics]
        self.updates = 0

    def act(self, s, explore: bool = False) -> np.ndarray:
        a = self.actor(np.asarray(s, dtype=np.float64))
        if explore:
            a = a + self.rng.normal(0.0, self.config.exploration_noise, size=self.action_dim) * self.half
        return np.clip(a, self.low, self.high)

    def random_action(self) -> np.ndarray:
        return self.rng.uniform(self.low, self.high)

    def q_estimate(self, s, a) -> float:
        x = np.concatenate([np.asarray(s, dtype=np.float64), np.asarray(a, dtype=np.float64).reshape(-1)])
        return float(self.critics[0](x)[0])

    def td_target(self, batch: Batch) -> np.ndarray:
        cfg = self.config
        a_next = self.actor_target(batch.s_next)
        if cfg.target_noise > 0:
            noise = np.clip(self.rng.normal(0.0, cfg.target_noise, size=a_next.shape),
                            -cfg.target_noise_clip, cfg.target_noise_clip) * self.half
            a_next = np.clip(a_next + noise, self.low, self.high)
        x_next = np.concatenate([batch.s_next, a_next], axis=1)
        q_next = self.critic_targets[0](x_next)[:, 0]
        for target in self.critic_targets[1:]:
            q_next = np.minimum(q_next, target(x_next)[:, 0])
        return batch.r + cfg.gamma * (1.0 - batch.done) * q_next

    def update(self, batch: Batch) -> dict:
        cfg = self.config
        y = self.td_target(batch)
        x = np.concatenate([batch.s, batch.a], axis=1)
        n = x.shape[0]
        diag = {}
        for i, (critic, opt) in enumerate(zip(self.critics, self.critic_opts)):
            q, acts = critic.forward(x, keep=True)
            err = q[:, 0] - y
            loss = float(np.mean(err ** 2))
            if not math.isfinite(loss):
                raise DivergenceError(f"critic {i} loss is {loss} after {self.updates} updates")
            grads, _ = critic.backward(x, (2.0 / n) * err[:, None], acts)
            opt.step(grads)
            diag[f"critic{i}_loss"] = loss
        self.updates += 1
        if self.updates % cfg.policy_delay == 0:
            a_pi, a_acts = self.actor.forward(batch.s, keep=True)
            xa = np.concatenate([batch.s, a_pi], axis=1)
            q_pi, c_acts = self.critics[0].forward(xa, keep=True)
            _, g_in = self.critics[0].backward(xa, np.full((n, 1), -1.0 / n), c_acts)
            grads, _ = self.actor.backward(batch.s, g_in[:, self.state_dim:], a_acts)
            self.actor_opt.step(grads)
            diag["actor_loss"] = float(-np.mean(q_pi))
            self.actor_target.soft_update(self.actor, cfg.tau)
            for target, critic in zip(self.critic_targets, self.critics):
                target.soft_update(critic, cfg.tau)
        return diag

    def networks(self) -> dict[str, MLP]:
        nets = {"actor": self.actor, "actor_target": self.actor_target}
        for i, (c, t) in enumerate(zip(self.critics, self.critic_targets)):
            nets[f"critic{i}"] = c
            nets[f"critic{i}_target"] = t
        return nets

    def save(self, path: str | os.PathLike) -> None:
        save_checkpoint(path, self.networks())

    def load(self, path: str | os.PathLike) -> None:
        load_checkpoint(path, self.networks())


def save_checkpoint(path, nets: dict[str, MLP]) -> None:
    """Write ``name,shape,values...`` lines, one per tensor."""
    with open(path, "w", encoding="ascii") as fh:
        for net_name, net in nets.items():
            for pname, p in zip(net.names, net.params):
                shape = "x".join(map(str, p.shape))
                values = ",".join(f"{v:.17g}" for v in p.ravel())
                fh.write(f"{net_name}.{pname},{shape},{values}\n")


def load_checkpoint(path, nets: dict[str, MLP]) -> None:
    tensors = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            name, shape, *values = line.rstrip("\n").split(",")
            dims = tuple(int(d) for d in shape.split("x")) if shape else ()
            arr = np.array([float(v) for v in values])
            if arr.size != int(np.prod(dims)):
                raise ValueError(f"{path}:{lineno}: {name} has {arr.size} values for shape {dims}")
            tensors[name] = arr.reshape(dims)
    for net_name, net in nets.items():
        for pname, p in zip(net.names, net.params):
            key = f"{net_name}.{pname}"
            if key not in tensors:
                raise KeyError(f"checkpoint {path} lacks tensor {key}")
            if tensors[key].shape != p.shape:
                raise ValueError(f"{key}: shape {tensors[key].shape} does not match {p.shape}")
            p[...] = tensors[key]
