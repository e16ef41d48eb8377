"""Key-value episodic memory of multi-step patterns.

Each pattern carries the total return of the episodes it occurred in, its
occurrence count and their ratio (the reward-confidence score). A second
mode keeps the running mean of critic estimates instead, for the
score-versus-Q comparison.
"""

from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .abstraction import PatternKey, canonical_bytes, encode_key, unpack_bytes

__all__ = ["MemoryEntry", "MemoryAggregates", "QEntry", "EpisodicMemory", "SnapshotError", "MODES"]

MODES = ("score", "qvalue")
_HEADER = "necsa-memory v1"


class SnapshotError(ValueError):
    pass


@dataclass(frozen=True)
class MemoryEntry:
    E: float
    eta: int
    c: float


@dataclass(frozen=True)
class QEntry:
    sum_q: float
    count: int

    @property
    def mean(self) -> float:
        return self.sum_q / self.count


@dataclass(frozen=True)
class MemoryAggregates:
    M: int
    sum_c: float
    min_c: float
    max_c: float


def _degenerate(lo: float, hi: float) -> bool:
    # Extrema that differ only by rounding (e.g. 6/3 vs 2) count as equal.
    return not hi - lo > 1e-12 * max(1.0, abs(lo), abs(hi))


def _normalize(value: float, lo: float, hi: float) -> float:
    if _degenerate(lo, hi):
        return 0.5
    x = (value - lo) / (hi - lo)
    return min(1.0, max(0.0, x))


class EpisodicMemory:
    """Exact-match pattern memory with O(1) add / lookup / update.

    Storage is slot based: a dict maps the 64-bit pattern code to a slot,
    the slot's canonical key is kept for verification, and the numbers
    live in growable numpy arrays. A code collision between different keys
    goes to an overflow dict keyed by the full key, so distinct patterns
    are never merged.

    In ``score`` mode the arrays hold (E, eta, c); in ``qvalue`` mode they
    hold (sum of Q, count, mean Q).
    """

    def __init__(self, mode: str = "score", m: int = 3, grid_count: int = 5, capacity: int = 1024):
        if mode not in MODES:
            raise ValueError(f"unknown memory mode {mode!r}; expected one of {MODES}")
        self.mode = mode
        self.m = m
        self.grid_count = grid_count
        self._index: dict[int, int] = {}
        self._overflow: dict[bytes, int] = {}
        self._keys: list[bytes] = []  # canonical packed keys, one per slot
        capacity = max(int(capacity), 16)
        self._total = np.zeros(capacity, dtype=np.float64)
        self._count = np.zeros(capacity, dtype=np.int64)
        self._value = np.zeros(capacity, dtype=np.float64)
        self._sum = 0.0
        self._min = math.inf
        self._max = -math.inf
        self.occurrences = 0

    # -- storage ---------------------------------------------------------

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, p: PatternKey) -> bool:
        return self._find(canonical_bytes(p)) is not None

    def _find(self, key: bytes, code: int | None = None) -> int | None:
        slot = self._index.get(encode_key(key) if code is None else code)
        if slot is None:
            return None
        if self._keys[slot] == key:
            return slot
        return self._overflow.get(key)

    def _insert(self, key: bytes, code: int) -> int:
        slot = len(self._keys)
        if slot == self._total.shape[0]:
            grow = slot * 2
            self._total = np.resize(self._total, grow)
            self._count = np.resize(self._count, grow)
            self._value = np.resize(self._value, grow)
        self._keys.append(key)
        if code in self._index:
            self._overflow[key] = slot
        else:
            self._index[code] = slot
        return slot

    def _accumulate(self, key: bytes, amount: float) -> tuple[float | None, float]:
        code = encode_key(key)
        slot = self._find(key, code)
        if slot is None:
            slot = self._insert(key, code)
            old = None
            self._total[slot] = amount
            self._count[slot] = 1
        else:
            old = float(self._value[slot])
            self._total[slot] += amount
            self._count[slot] += 1
        new = float(self._total[slot] / self._count[slot])
        self._value[slot] = new
        return old, new

    def _absorb(self, changes: Iterable[tuple[float | None, float]]) -> None:
        # Extrema stay exact: rescan only when a value that sat on an extremum moved inward.
        rescan = False
        for old, new in changes:
            if old is not None and (old == self._min and new > old or old == self._max and new < old):
                rescan = True
            if new < self._min:
                self._min = new
            if new > self._max:
                self._max = new
        values = self._value[: len(self._keys)]
        if rescan:
            self._min = float(values.min())
            self._max = float(values.max())
        # Re-summing per batch keeps the total free of drift and reproducible after load.
        self._sum = float(values.sum()) if len(values) else 0.0

    def _require(self, mode: str) -> None:
        if self.mode != mode:
            raise ValueError(f"operation needs a {mode!r} memory, this one is {self.mode!r}")

    # -- score mode ------------------------------------------------------

    def observe_episode(self, patterns: Iterable[PatternKey], episode_return: float) -> None:
        """Credit ``episode_return`` to every pattern occurrence of a finished episode.

        A pattern seen k times in the episode is credited k times.
        """
        self._require("score")
        G = float(episode_return)
        if not math.isfinite(G):
            raise ValueError(f"episode return must be finite, got {episode_return!r}")
        changes = []
        for p in patterns:
            changes.append(self._accumulate(canonical_bytes(p), G))
        self.occurrences += len(changes)
        self._absorb(changes)

    def entry(self, p: PatternKey) -> MemoryEntry | None:
        self._require("score")
        slot = self._find(canonical_bytes(p))
        if slot is None:
            return None
        return MemoryEntry(float(self._total[slot]), int(self._count[slot]), float(self._value[slot]))

    def raw_score(self, p: PatternKey) -> float | None:
        slot = self._find(canonical_bytes(p))
        return None if slot is None else float(self._value[slot])

    def lookup_score(self, p: PatternKey) -> float | None:
        """Score of ``p`` affinely rescaled to [0, 1]; None if never seen."""
        self._require("score")
        return self._lookup(p)

    def _lookup(self, p: PatternKey) -> float | None:
        slot = self._find(canonical_bytes(p))
        if slot is None:
            return None
        return _normalize(float(self._value[slot]), self._min, self._max)

    def mean_normalized_score(self) -> float:
        """Mean of the normalized scores over distinct patterns."""
        if not self._keys:
            raise ValueError("mean score of an empty memory is undefined")
        return _normalize(self._sum / len(self._keys), self._min, self._max)

    @property
    def aggregates(self) -> MemoryAggregates:
        return MemoryAggregates(len(self._keys), self._sum, self._min, self._max)

    def scan_aggregates(self) -> MemoryAggregates:
        """Aggregates recomputed from scratch by a full pass."""
        n = len(self._keys)
        if n == 0:
            return MemoryAggregates(0, 0.0, math.inf, -math.inf)
        values = self._value[:n]
        return MemoryAggregates(n, float(values.sum()), float(values.min()), float(values.max()))

    # -- qvalue mode -----------------------------------------------------

    def observe_q(self, p: PatternKey, q: float) -> None:
        self._require("qvalue")
        q = float(q)
        if not math.isfinite(q):
            raise ValueError(f"Q estimate must be finite, got {q!r}")
        self.occurrences += 1
        self._absorb([self._accumulate(canonical_bytes(p), q)])

    def observe_q_episode(self, patterns: Iterable[PatternKey], qs: Iterable[float]) -> None:
        self._require("qvalue")
        changes = []
        for p, q in zip(patterns, qs):
            q = float(q)
            if not math.isfinite(q):
                raise ValueError(f"Q estimate must be finite, got {q!r}")
            changes.append(self._accumulate(canonical_bytes(p), q))
        self.occurrences += len(changes)
        self._absorb(changes)

    def q_entry(self, p: PatternKey) -> QEntry | None:
        self._require("qvalue")
        slot = self._find(canonical_bytes(p))
        if slot is None:
            return None
        return QEntry(float(self._total[slot]), int(self._count[slot]))

    def lookup_q(self, p: PatternKey) -> float | None:
        self._require("qvalue")
        return self._lookup(p)

    # -- shared ----------------------------------------------------------

    def lookup(self, p: PatternKey) -> float | None:
        """Normalized measurement in whichever mode this memory runs."""
        return self._lookup(p)

    def density_histogram(self) -> dict[int, int]:
        """Map visit count -> number of patterns visited that often."""
        n = len(self._keys)
        if n == 0:
            return {}
        counts, freq = np.unique(self._count[:n], return_counts=True)
        return {int(c): int(f) for c, f in zip(counts, freq)}

    def once_visited_fraction(self) -> float:
        n = len(self._keys)
        if n == 0:
            return 0.0
        return float(np.count_nonzero(self._count[:n] == 1)) / n

    def items(self) -> Iterator[tuple[PatternKey, float, int, float]]:
        """Yield (pattern, total, count, value) for every stored pattern."""
        for slot, key in enumerate(self._keys):
            yield (PatternKey.from_flat(unpack_bytes(key)), float(self._total[slot]),
                   int(self._count[slot]), float(self._value[slot]))

    # -- persistence -----------------------------------------------------

    def snapshot(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"{_HEADER} mode={self.mode} m={self.m} N={self.grid_count}\n")
            for slot, key in enumerate(self._keys):
                flat = unpack_bytes(key)
                # Line layout: length, then grid_count, dim and the indices.
                idx = ",".join(map(str, flat[1:]))
                fh.write(
                    f"{flat[0]},{idx},{int(self._count[slot])},"
                    f"{float(self._total[slot]):.17g},{float(self._value[slot]):.17g}\n"
                )

    @classmethod
    def load(cls, path: str | os.PathLike) -> EpisodicMemory:
        with open(path, "r", encoding="ascii") as fh:
            header = fh.readline().rstrip("\n")
            fields = header.split()
            if len(fields) != 5 or " ".join(fields[:2]) != _HEADER:
                raise SnapshotError(f"{path}:1: bad header {header!r}")
            try:
                opts = dict(f.split("=", 1) for f in fields[2:])
                mem = cls(mode=opts["mode"], m=int(opts["m"]), grid_count=int(opts["N"]))
            except (KeyError, ValueError) as exc:
                raise SnapshotError(f"{path}:1: bad header {header!r}") from exc
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                try:
                    parts = line.split(",")
                    flat = tuple(int(x) for x in parts[:-3])
                    count = int(parts[-3])
                    total = float(parts[-2])
                    value = float(parts[-1])
                    if len(flat) < 3 or len(flat) != 3 + flat[0] * flat[2] or count < 1:
                        raise ValueError("inconsistent field count")
                    if not (math.isfinite(total) and math.isfinite(value)):
                        raise ValueError("non-finite value")
                except ValueError as exc:
                    raise SnapshotError(f"{path}:{lineno}: malformed entry ({exc})") from exc
                key = canonical_bytes(flat)
                code = encode_key(key)
                if mem._find(key, code) is not None:
                    raise SnapshotError(f"{path}:{lineno}: duplicate pattern")
                slot = mem._insert(key, code)
                mem._total[slot] = total
                mem._count[slot] = count
                mem._value[slot] = value
                mem.occurrences += count
        n = len(mem)
        if n:
            values = mem._value[:n]
            mem._min = float(values.min())
            mem._max = float(values.max())
            mem._sum = float(values.sum())
        return mem

    def state_equal(self, other: EpisodicMemory) -> bool:
        n = len(self)
        return (
            self.mode == other.mode and self.m == other.m and self.grid_count == other.grid_count
            and self._keys == other._keys
            and np.array_equal(self._total[:n], other._total[:n])
            and np.array_equal(self._count[:n], other._count[:n])
            and np.array_equal(self._value[:n], other._value[:n])
            and self.aggregates == other.aggregates
        )


def density_counter(patterns: Iterable[PatternKey]) -> Counter:
    """Independent occurrence count per pattern (used to cross-check the memory)."""
    return Counter(p.flat() for p in patterns)
