"""Grid abstraction of state / state-action vectors and multi-step pattern keys."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "BoundedVector",
    "ProjectionMatrix",
    "GridKey",
    "PatternKey",
    "build_projection",
    "project",
    "concat_state_action",
    "discretize",
    "extract_pattern",
    "encode_key",
    "canonical_bytes",
    "unpack_bytes",
]


def _as_bounds(b, shape) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape == shape:
        return b
    return np.full(shape, b) if b.ndim == 0 else np.broadcast_to(b, shape).copy()


@dataclass(frozen=True)
class BoundedVector:
    """A vector with per-dimension lower/upper bounds.

    Values are allowed outside the bounds; ``discretize`` clips them.
    """

    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        lower = _as_bounds(self.lower, values.shape)
        upper = _as_bounds(self.upper, values.shape)
        if not (lower < upper).all():
            raise ValueError("every lower bound must be strictly below its upper bound")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def __len__(self) -> int:
        return self.values.shape[0]

    def with_values(self, values) -> BoundedVector:
        """Same bounds, new values; skips re-validating the bounds."""
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.shape != self.values.shape:
            raise ValueError(f"expected {len(self)} values, got {values.shape[0]}")
        out = object.__new__(BoundedVector)
        object.__setattr__(out, "values", values)
        object.__setattr__(out, "lower", self.lower)
        object.__setattr__(out, "upper", self.upper)
        return out


@dataclass(frozen=True, eq=False)
class ProjectionMatrix:
    entries: np.ndarray
    seed: int

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class GridKey:
    """Interval indices of one abstract state."""

    indices: tuple[int, ...]
    grid_count: int

    @property
    def dim(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class PatternKey:
    """Ordered window of consecutive grid keys. Different lengths never compare equal."""

    keys: tuple[GridKey, ...]
    _flat: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        keys = tuple(self.keys)
        if not keys:
            raise ValueError("a pattern holds at least one grid key")
        object.__setattr__(self, "keys", keys)
        head = keys[0]
        flat = [len(keys), head.grid_count, head.dim]
        for k in keys:
            if k.grid_count != head.grid_count or k.dim != head.dim:
                raise ValueError("all grid keys in a pattern must share grid count and dimension")
            flat.extend(k.indices)
        object.__setattr__(self, "_flat", tuple(flat))

    def __len__(self) -> int:
        return len(self.keys)

    def flat(self) -> tuple[int, ...]:
        """Canonical integer tuple: (length, grid_count, dim, *indices)."""
        return self._flat

    @classmethod
    def from_flat(cls, flat: Sequence[int]) -> PatternKey:
        length, grid_count, dim = int(flat[0]), int(flat[1]), int(flat[2])
        body = [int(x) for x in flat[3:]]
        if len(body) != length * dim:
            raise ValueError(f"flat key has {len(body)} indices, expected {length * dim}")
        keys = tuple(
            GridKey(tuple(body[i * dim:(i + 1) * dim]), grid_count) for i in range(length)
        )
        return cls(keys)


def build_projection(seed: int, in_dim: int, out_dim: int) -> ProjectionMatrix:
    """Seeded Gaussian matrix with entries clipped to [-1, 1]."""
    if in_dim <= 0 or out_dim <= 0:
        raise ValueError("projection dimensions must be positive")
    rng = np.random.default_rng(seed)
    entries = np.clip(rng.standard_normal((in_dim, out_dim)), -1.0, 1.0)
    entries.setflags(write=False)
    return ProjectionMatrix(entries=entries, seed=seed)


def project(v, P: ProjectionMatrix) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.shape[0] != P.rows:
        raise ValueError(f"vector of length {v.shape[0]} cannot be projected by a {P.rows}x{P.cols} matrix")
    return v @ P.entries


def concat_state_action(s: BoundedVector, a: BoundedVector) -> BoundedVector:
    if len(a) == 0:
        return s
    if len(s) == 0:
        return a
    return BoundedVector(
        np.concatenate([s.values, a.values]),
        np.concatenate([s.lower, a.lower]),
        np.concatenate([s.upper, a.upper]),
    )


def discretize(v: BoundedVector, N: int) -> GridKey:
    """Map each component to its interval index in [0, N-1].

    Out-of-range components clamp to the boundary interval; the upper bound
    itself belongs to the last interval.
    """
    if N < 2:
        raise ValueError("grid count must be at least 2")
    scaled = ((v.values - v.lower) * N / (v.upper - v.lower)).tolist()
    if not all(map(math.isfinite, scaled)):
        raise ValueError("cannot discretize a non-finite vector")
    top = N - 1
    return GridKey(tuple(0 if x < 0 else top if x >= top else int(x) for x in scaled), N)


def extract_pattern(history: Sequence[GridKey], t: int, m: int) -> PatternKey:
    """Return the window of at most ``m`` keys ending at ``t`` (shorter near the start)."""
    if not 0 <= t < len(history):
        raise IndexError(f"step {t} outside history of length {len(history)}")
    if m < 1:
        raise ValueError("pattern length must be at least 1")
    start = max(0, t - m + 1)
    return PatternKey(tuple(history[start:t + 1]))


def canonical_bytes(p: PatternKey | Sequence[int]) -> bytes:
    """Little-endian int64 packing of a pattern's canonical integers."""
    flat = p.flat() if isinstance(p, PatternKey) else p
    return struct.pack(f"<{len(flat)}q", *flat)


def unpack_bytes(data: bytes) -> tuple[int, ...]:
    return struct.unpack(f"<{len(data) // 8}q", data)


def encode_key(p: PatternKey | Sequence[int] | bytes) -> int:
    """Stable 64-bit code of a pattern (blake2b over its canonical integers).

    Codes only index the memory table; equality is always checked on the
    retained key.
    """
    data = p if isinstance(p, bytes) else canonical_bytes(p)
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def keyspace_size_log10(dim: int, N: int) -> float:
    """log10 of N**dim, the number of distinct grid keys."""
    return dim * math.log10(N)
