"""Configurations, cost coefficients, and the deduplicated working pool.

A configuration is a canonical (strictly increasing) tuple of point indices
whose labels are pairwise distinct; it represents a group of points that an
adversary could merge by perturbing each inside a common ball.  The pool
holds the working set of configurations together with their cached cost
coefficients; caching matters because the enclosing-ball radius dominates
runtime on large instances.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from advrisk.data import LabeledDataset
from advrisk.geometry import Metric, enclosing_ball, w2_penalty, within_budget

__all__ = [
    "Configuration",
    "CostKind",
    "CostModel",
    "ConfigurationPool",
    "canonical",
    "is_feasible",
    "cost",
    "insert",
    "trim_inactive",
]

# A configuration is its canonical index tuple; plain tuples keep hashing and
# equality cheap in the pool's dedup map.
Configuration = tuple[int, ...]

_HASH_MULT = np.uint64(0x9E3779B97F4A7C15)


def row_hash(idx: np.ndarray) -> np.ndarray:
    """Order-sensitive uint64 hash per row of an (n, m) index matrix.

    Used as an exact-match prefilter: equal rows always hash equal, and hash
    hits are verified against the actual indices.
    """
    idx = np.asarray(idx)
    m = idx.shape[1]
    weights = _HASH_MULT ** np.arange(1, m + 1, dtype=np.uint64)
    return (idx.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)


class _BulkBlock:
    """Array-backed members of one configuration length, with tombstones."""

    __slots__ = ("m", "idx", "cost", "alive", "_sorted_hash", "_order")

    def __init__(self, m: int, idx: np.ndarray, cost: np.ndarray) -> None:
        self.m = int(m)
        self.idx = np.ascontiguousarray(idx, dtype=np.int32).reshape(-1, m)
        self.cost = np.ascontiguousarray(cost, dtype=np.float64)
        if self.idx.shape[0] != self.cost.shape[0]:
            raise ValueError("index and cost row counts differ")
        self.alive = np.ones(self.idx.shape[0], dtype=bool)
        self._sorted_hash = None
        self._order = None

    def lookup(self, r: Configuration) -> int:
        """Row number of configuration r, or -1; ignores tombstones."""
        if self._sorted_hash is None:
            h = row_hash(self.idx)
            self._order = np.argsort(h, kind="stable")
            self._sorted_hash = h[self._order]
        target = row_hash(np.asarray(r, dtype=np.int32).reshape(1, -1))[0]
        lo = int(np.searchsorted(self._sorted_hash, target, side="left"))
        arr = np.asarray(r, dtype=np.int32)
        while lo < self._sorted_hash.shape[0] and self._sorted_hash[lo] == target:
            row = int(self._order[lo])
            if np.array_equal(self.idx[row], arr):
                return row if self.alive[row] else -1
            lo += 1
        return -1

    def n_alive(self) -> int:
        return int(self.alive.sum())


def canonical(indices: Iterable[int]) -> Configuration:
    """Sort indices into canonical form; duplicate indices are rejected."""
    r = tuple(sorted(int(i) for i in indices))
    if not r:
        raise ValueError("configuration must contain at least one index")
    for a, b in zip(r, r[1:]):
        if a == b:
            raise ValueError(f"duplicate point index {a} in configuration")
    return r


class CostKind(enum.Enum):
    CLASSICAL = "classical"
    W2 = "w2"


@dataclass(frozen=True)
class CostModel:
    """Cost coefficient rule: hard perturbation budget or soft ball penalty.

    Classical: c(r) = 1 if the enclosing ball of the configuration's points
    has radius <= epsilon (with float slack), +inf otherwise.  W2: always
    finite, c(r) = 1 + (1/tau^2) * sum of squared distances to the mean.
    """

    kind: CostKind
    metric: Metric
    epsilon: float | None = None
    tau: float | None = None

    def __post_init__(self) -> None:
        if self.kind is CostKind.CLASSICAL:
            if self.epsilon is None or not self.epsilon > 0:
                raise ValueError("classical cost needs epsilon > 0")
        else:
            if self.tau is None or not self.tau > 0:
                raise ValueError("W2 cost needs tau > 0")
            if self.metric is not Metric.EUCLIDEAN:
                raise ValueError("W2 cost is defined for the Euclidean metric only")

    @classmethod
    def classical(cls, epsilon: float, metric: Metric = Metric.EUCLIDEAN) -> "CostModel":
        return cls(CostKind.CLASSICAL, metric, epsilon=epsilon)

    @classmethod
    def w2(cls, tau: float, metric: Metric = Metric.EUCLIDEAN) -> "CostModel":
        return cls(CostKind.W2, metric, tau=tau)


def is_feasible(r: Configuration, ds: LabeledDataset) -> bool:
    """True iff the indexed points carry pairwise distinct labels."""
    n = ds.n_points
    for i in r:
        if not 0 <= i < n:
            raise IndexError(f"point index {i} out of range [0, {n})")
    labels = ds.labels[list(r)]
    return len(set(labels.tolist())) == len(r)


def cost(r: Configuration, ds: LabeledDataset, cm: CostModel) -> float:
    """Cost coefficient of a feasible configuration (may be +inf)."""
    if not is_feasible(r, ds):
        raise ValueError(f"configuration {r} has repeated labels")
    if len(r) == 1:
        return 1.0
    pts = ds.features[list(r)]
    if cm.kind is CostKind.CLASSICAL:
        radius = enclosing_ball(pts, cm.metric).radius
        return 1.0 if within_budget(radius, cm.epsilon) else math.inf
    return 1.0 + w2_penalty(pts, cm.tau)


class ConfigurationPool:
    """Working set of configurations with cached costs, insertion-ordered.

    The pool is bound to its dataset and cost model so that insertion can
    price new members on the spot.  All N singletons are inserted up front
    by default: they keep the transport problem feasible no matter what is
    trimmed later, and every singleton has cost exactly 1.
    """

    def __init__(
        self,
        dataset: LabeledDataset,
        cost_model: CostModel,
        with_singletons: bool = True,
    ) -> None:
        self.dataset = dataset
        self.cost_model = cost_model
        self._cost: dict[Configuration, float] = {}
        self._bulk: dict[int, _BulkBlock] = {}
        if with_singletons:
            for i in range(dataset.n_points):
                self._cost[(i,)] = 1.0

    @classmethod
    def from_blocks(
        cls,
        dataset: LabeledDataset,
        cost_model: CostModel,
        blocks: Iterable[tuple[int, np.ndarray, np.ndarray]],
    ) -> "ConfigurationPool":
        """Adopt pre-deduplicated per-length arrays without materializing
        tuples (enumeration at scale produces millions of members).

        Rows must be canonical and unique; the caller guarantees this.
        """
        pool = cls(dataset, cost_model, with_singletons=False)
        for m, idx, cost in blocks:
            if idx.shape[0] == 0:
                continue
            if m in pool._bulk:
                raise ValueError(f"duplicate block for length {m}")
            pool._bulk[m] = _BulkBlock(m, idx, cost)
        return pool

    def __len__(self) -> int:
        return len(self._cost) + sum(b.n_alive() for b in self._bulk.values())

    def __contains__(self, r: Configuration) -> bool:
        r = tuple(r)
        if r in self._cost:
            return True
        block = self._bulk.get(len(r))
        return block is not None and block.lookup(r) >= 0

    def __iter__(self) -> Iterator[Configuration]:
        for block in self._bulk.values():
            for row in np.flatnonzero(block.alive):
                yield tuple(int(v) for v in block.idx[row])
        yield from self._cost

    def cost_of(self, r: Configuration) -> float:
        r = tuple(r)
        if r in self._cost:
            return self._cost[r]
        block = self._bulk.get(len(r))
        if block is not None:
            row = block.lookup(r)
            if row >= 0:
                return float(block.cost[row])
        raise KeyError(r)

    def insert(self, r: Configuration, cost_value: float | None = None) -> bool:
        """Add a feasible configuration; returns False on duplicates.

        The cost coefficient is computed here unless the caller already has
        it (search loops typically priced the configuration while deciding
        to keep it).
        """
        r = canonical(r)
        if r in self:
            return False
        if cost_value is None:
            cost_value = cost(r, self.dataset, self.cost_model)
        else:
            if not is_feasible(r, self.dataset):
                raise ValueError(f"configuration {r} has repeated labels")
        self._cost[r] = float(cost_value)
        return True

    def trim_inactive(
        self,
        active: Iterable[Configuration],
        n_remove: int,
        rng: np.random.Generator | None = None,
    ) -> int:
        """Remove up to n_remove members that are neither active nor singletons.

        Victims are drawn uniformly at random so recent offspring are not
        systematically evicted.  Members of `active` (typically the support
        and basis of the last solve) always survive, which keeps the next
        solve warm-startable.
        """
        if n_remove <= 0:
            return 0
        protected = {tuple(a) for a in active}
        eligible_dict = [r for r in self._cost if len(r) > 1 and r not in protected]
        eligible_bulk: list[tuple[int, int]] = []
        for m, block in self._bulk.items():
            if m == 1:
                continue
            rows = np.flatnonzero(block.alive)
            shielded = {
                block.lookup(r) for r in protected if len(r) == m
            }
            eligible_bulk.extend((m, int(row)) for row in rows if int(row) not in shielded)
        total = len(eligible_dict) + len(eligible_bulk)
        if total == 0:
            return 0
        n_remove = min(n_remove, total)
        rng = rng if rng is not None else np.random.default_rng()
        victims = rng.choice(total, size=n_remove, replace=False)
        for v in victims:
            v = int(v)
            if v < len(eligible_dict):
                del self._cost[eligible_dict[v]]
            else:
                m, row = eligible_bulk[v - len(eligible_dict)]
                self._bulk[m].alive[row] = False
        return n_remove

    def blocks(self) -> list[tuple[int, np.ndarray, np.ndarray]]:
        """Group members by length for vectorized pricing.

        Returns [(m, indices (n_m, m) int32, costs (n_m,) float64), ...] in
        increasing m; rows follow pool insertion order within each block.
        """
        by_len: dict[int, tuple[list[Configuration], list[float]]] = {}
        for r, c in self._cost.items():
            rows, costs = by_len.setdefault(len(r), ([], []))
            rows.append(r)
            costs.append(c)
        out = []
        for m in sorted(set(by_len) | set(self._bulk)):
            parts_idx, parts_cost = [], []
            block = self._bulk.get(m)
            if block is not None and block.alive.any():
                if block.alive.all():
                    parts_idx.append(block.idx)
                    parts_cost.append(block.cost)
                else:
                    parts_idx.append(block.idx[block.alive])
                    parts_cost.append(block.cost[block.alive])
            if m in by_len:
                rows, costs = by_len[m]
                parts_idx.append(np.array(rows, dtype=np.int32).reshape(len(rows), m))
                parts_cost.append(np.array(costs, dtype=np.float64))
            idx = parts_idx[0] if len(parts_idx) == 1 else np.concatenate(parts_idx)
            cost_arr = parts_cost[0] if len(parts_cost) == 1 else np.concatenate(parts_cost)
            if idx.shape[0]:
                out.append((m, idx, cost_arr))
        return out

    def snapshot(self) -> str:
        """JSON array of {indices, cost} in insertion order (debug/restart).

        Infinite costs are stored as null to keep the output strict JSON.
        """
        entries = []
        for m, idx, cost_arr in self.blocks():
            for row in range(idx.shape[0]):
                c = float(cost_arr[row])
                entries.append(
                    {"indices": [int(v) for v in idx[row]],
                     "cost": c if math.isfinite(c) else None}
                )
        return json.dumps(entries)

    @classmethod
    def from_snapshot(
        cls, text: str, dataset: LabeledDataset, cost_model: CostModel
    ) -> "ConfigurationPool":
        pool = cls(dataset, cost_model, with_singletons=False)
        for entry in json.loads(text):
            c = entry["cost"]
            pool._cost[canonical(entry["indices"])] = math.inf if c is None else float(c)
        return pool


def insert(pool: ConfigurationPool, r: Configuration) -> bool:
    """Functional form of ConfigurationPool.insert."""
    return pool.insert(r)


def trim_inactive(
    pool: ConfigurationPool,
    active: Iterable[Configuration],
    n_remove: int,
    rng: np.random.Generator | None = None,
) -> int:
    """Functional form of ConfigurationPool.trim_inactive."""
    return pool.trim_inactive(active, n_remove, rng)
