"""Intrinsic reward revision and the per-step / per-episode hooks around it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .abstraction import (
    BoundedVector,
    GridKey,
    PatternKey,
    build_projection,
    concat_state_action,
    discretize,
    extract_pattern,
    project,
)
from .memory import EpisodicMemory

__all__ = ["ShapingConfig", "RevisedTransition", "revise_reward", "ShapingPipeline"]

ABSTRACT_MODES = ("state", "state_action")


@dataclass
class ShapingConfig:
    epsilon: float = 0.2
    m: int = 3
    grid_count: int = 5
    abstract_mode: str = "state_action"
    measure_mode: str = "score"
    projection_threshold: int = 24
    projection_bound: float = 10.0
    projection_seed: int = 0

    def __post_init__(self) -> None:
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ValueError("epsilon must be a finite non-negative number")
        if self.m < 1:
            raise ValueError("pattern length m must be >= 1")
        if self.grid_count < 2:
            raise ValueError("grid_count must be >= 2")
        if self.abstract_mode not in ABSTRACT_MODES:
            raise ValueError(f"abstract_mode must be one of {ABSTRACT_MODES}")
        if self.measure_mode not in ("score", "qvalue"):
            raise ValueError("measure_mode must be 'score' or 'qvalue'")
        if self.projection_threshold < 1:
            raise ValueError("projection_threshold must be positive")
        if not self.projection_bound > 0:
            raise ValueError("projection_bound must be positive")


@dataclass
class RevisedTransition:
    s: np.ndarray
    a: np.ndarray
    r_raw: float
    r_hat: float
    s_next: np.ndarray
    done: bool
    t: int


def revise_reward(r: float, c_norm: float | None, mean_norm: float | None, epsilon: float) -> float:
    """``r + (c_norm - mean_norm) * epsilon``; unseen patterns (or an empty memory) leave ``r`` as is."""
    for x in (r, epsilon):
        if not math.isfinite(x):
            raise ValueError(f"non-finite input to reward revision: {x!r}")
    if c_norm is None or mean_norm is None:
        return r
    if not (math.isfinite(c_norm) and math.isfinite(mean_norm)):
        raise ValueError("non-finite score in reward revision")
    return r + (c_norm - mean_norm) * epsilon


class ShapingPipeline:
    """Abstract -> look up -> revise at every step, credit patterns at episode end.

    With ``revise=False`` the pipeline still abstracts and records patterns
    (so memory statistics are available for a baseline run) but hands back
    the raw reward untouched.
    """

    def __init__(
        self,
        config: ShapingConfig,
        state_lower: Sequence[float],
        state_upper: Sequence[float],
        action_lower: Sequence[float] = (),
        action_upper: Sequence[float] = (),
        memory: EpisodicMemory | None = None,
        revise: bool = True,
    ):
        self.config = config
        self.revise = revise
        self._s_lo = np.asarray(state_lower, dtype=np.float64)
        self._s_hi = np.asarray(state_upper, dtype=np.float64)
        self._a_lo = np.asarray(action_lower, dtype=np.float64)
        self._a_hi = np.asarray(action_upper, dtype=np.float64)
        self.memory = memory if memory is not None else EpisodicMemory(
            mode=config.measure_mode, m=config.m, grid_count=config.grid_count
        )
        if self.memory.mode != config.measure_mode:
            raise ValueError("memory mode does not match measure_mode")

        self._with_action = config.abstract_mode == "state_action" and self._a_lo.shape[0] > 0
        template = BoundedVector(np.zeros_like(self._s_lo), self._s_lo, self._s_hi)
        if self._with_action:
            template = concat_state_action(template, BoundedVector(np.zeros_like(self._a_lo), self._a_lo, self._a_hi))
        self._template = template
        in_dim = len(template)
        self.input_dim = in_dim
        self.projection = None
        if in_dim > config.projection_threshold:
            self.projection = build_projection(config.projection_seed, in_dim, config.projection_threshold)
            self._p_lo = np.full(config.projection_threshold, -config.projection_bound)
            self._p_hi = np.full(config.projection_threshold, config.projection_bound)

        self.states: list[np.ndarray] = []
        self.actions: list[np.ndarray] = []
        self.rewards: list[float] = []
        self.revised: list[float] = []
        self.dones: list[bool] = []
        self.keys: list[GridKey] = []
        self.patterns: list[PatternKey] = []
        self.qs: list[float] = []
        self._mean: float | None = None
        self._mean_fresh = False

    def abstract(self, s, a=None) -> GridKey:
        # Same as concat_state_action on the two bounded vectors, with bounds concatenated once.
        values = np.concatenate([s, np.asarray(a, dtype=np.float64).reshape(-1)]) if self._with_action else s
        vec = self._template.with_values(values)
        if self.projection is not None:
            vec = BoundedVector(project(vec.values, self.projection), self._p_lo, self._p_hi)
        return discretize(vec, self.config.grid_count)

    def _mean_score(self) -> float | None:
        if not self._mean_fresh:
            self._mean = self.memory.mean_normalized_score() if len(self.memory) else None
            self._mean_fresh = True
        return self._mean

    def step_hook(self, s, a, r: float, done: bool, s_next=None, q: float | None = None) -> RevisedTransition:
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64).reshape(-1)
        t = len(self.keys)
        self.states.append(s)
        self.actions.append(a)
        self.dones.append(bool(done))
        self.keys.append(self.abstract(s, a))
        pattern = extract_pattern(self.keys, t, self.config.m)
        self.patterns.append(pattern)
        if self.config.measure_mode == "qvalue":
            if q is None:
                raise ValueError("qvalue measurement needs a Q estimate at every step")
            self.qs.append(float(q))

        r = float(r)
        if self.revise:
            r_hat = revise_reward(r, self.memory.lookup(pattern), self._mean_score(), self.config.epsilon)
        else:
            r_hat = r
        self.rewards.append(r)
        self.revised.append(r_hat)
        s_next = s if s_next is None else np.asarray(s_next, dtype=np.float64)
        return RevisedTransition(s=s, a=a, r_raw=r, r_hat=r_hat, s_next=s_next, done=bool(done), t=t)

    def episode_hook(self, trace_patterns: Sequence[PatternKey], episode_return: float) -> None:
        if trace_patterns:
            if self.config.measure_mode == "score":
                self.memory.observe_episode(trace_patterns, episode_return)
            else:
                self.memory.observe_q_episode(trace_patterns, self.qs)
        self.clear()

    def end_episode(self) -> float:
        """Credit the buffered trace with its undiscounted raw return and reset buffers."""
        G = float(sum(self.rewards))
        self.episode_hook(self.patterns, G)
        return G

    def clear(self) -> None:
        for buf in (self.states, self.actions, self.rewards, self.revised,
                    self.dones, self.keys, self.patterns, self.qs):
            buf.clear()
        self._mean_fresh = False
