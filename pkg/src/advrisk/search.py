"""Configuration discovery under the hard budget.

Two routes produce the working set of the transport LP: full level-wise
enumeration of every configuration whose enclosing ball fits the budget,
and a genetic loop that mutates configurations drawn from the current LP
support (add a foreign-class point, swap one entry, drop one entry) and
keeps offspring that fit the budget.  The LP value after either route turns
into a risk lower bound via risk = 1 - objective / N; for the genetic route
the bound is valid at every generation, not only at convergence.
"""

from __future__ import annotations

import enum
import json
import time
from dataclasses import dataclass

import numpy as np

from advrisk import lp
from advrisk._exhaustive import EnumerationCapExceeded, enumerate_blocks
from advrisk.configuration import (
    Configuration,
    ConfigurationPool,
    CostModel,
    canonical,
    cost,
)
from advrisk.data import LabeledDataset
from advrisk.geometry import Metric

__all__ = [
    "Rule",
    "GeneticParams",
    "TraceRecord",
    "ConvergenceTrace",
    "EnumerationCapExceeded",
    "exhaustive_search",
    "propose_offspring",
    "genetic_search",
]


class Rule(enum.Enum):
    """Offspring proposal moves."""

    ADD = "add"
    SWAP = "swap"
    DROP = "drop"


_RULES = (Rule.ADD, Rule.SWAP, Rule.DROP)

# per-dataset cache of point indices grouped by class label
_CLASS_MEMBERS: dict[int, tuple[np.ndarray, list[np.ndarray]]] = {}


def _class_members(ds: LabeledDataset) -> list[np.ndarray]:
    hit = _CLASS_MEMBERS.get(id(ds))
    if hit is not None and hit[0] is ds.labels:
        return hit[1]
    if len(_CLASS_MEMBERS) > 64:
        _CLASS_MEMBERS.clear()
    members = [np.flatnonzero(ds.labels == c) for c in range(1, ds.n_classes + 1)]
    _CLASS_MEMBERS[id(ds)] = (ds.labels, members)
    return members


def propose_offspring(
    parent: Configuration,
    rule: Rule,
    ds: LabeledDataset,
    rng: np.random.Generator,
) -> Configuration | None:
    """Mutate a feasible parent; None when the move is impossible.

    Add appends a uniformly drawn point of a class absent from the parent;
    Swap replaces a uniformly chosen entry by a uniformly drawn other point
    of a class absent from the remaining entries; Drop removes a uniformly
    chosen entry.  Offspring always have pairwise-distinct labels; whether
    they fit the budget is the caller's acceptance decision.
    """
    m = len(parent)
    if rule is Rule.DROP:
        if m <= 1:
            return None
        j = int(rng.integers(m))
        return parent[:j] + parent[j + 1 :]

    members = _class_members(ds)
    labels = ds.labels
    if rule is Rule.ADD:
        present = {int(labels[i]) for i in parent}
        foreign = [members[c] for c in range(ds.n_classes) if c + 1 not in present]
        foreign = [arr for arr in foreign if arr.size]
        if not foreign:
            return None
        candidates = foreign[0] if len(foreign) == 1 else np.concatenate(foreign)
        q = int(candidates[rng.integers(candidates.size)])
        return canonical(parent + (q,))

    # Swap: the replacement may reuse the vacated class but not the vacated
    # point, otherwise the "mutation" could be the identity
    j = int(rng.integers(m))
    rest = parent[:j] + parent[j + 1 :]
    present = {int(labels[i]) for i in rest}
    admissible = [members[c] for c in range(ds.n_classes) if c + 1 not in present]
    admissible = [arr for arr in admissible if arr.size]
    if not admissible:
        return None
    candidates = admissible[0] if len(admissible) == 1 else np.concatenate(admissible)
    candidates = candidates[candidates != parent[j]]
    if candidates.size == 0:
        return None
    q = int(candidates[rng.integers(candidates.size)])
    return canonical(rest + (q,))


@dataclass(frozen=True)
class GeneticParams:
    """Knobs of the genetic loop.

    samples_per_generation defaults to twice the dataset size when left as
    None.  rule_weights are the relative draw frequencies of (add, swap,
    drop); the 1:1:0 default leaves the drop move off, matching the usual
    weighting for the hard-budget problem.
    """

    samples_per_generation: int | None = None
    rule_weights: tuple[float, float, float] = (1.0, 1.0, 0.0)
    time_limit: float = 300.0
    stagnation_generations: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.samples_per_generation is not None and self.samples_per_generation < 1:
            raise ValueError("samples_per_generation must be >= 1")
        w = self.rule_weights
        if len(w) != 3 or any(x < 0 for x in w):
            raise ValueError("rule_weights must be three nonnegative reals")
        if not sum(w) > 0:
            raise ValueError("rule_weights must not all be zero")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if self.stagnation_generations < 1:
            raise ValueError("stagnation_generations must be >= 1")

    def resolve_samples(self, ds: LabeledDataset) -> int:
        if self.samples_per_generation is not None:
            return self.samples_per_generation
        return 2 * ds.n_points


@dataclass(frozen=True)
class TraceRecord:
    elapsed_s: float
    generation: int
    pool_size: int
    objective: float
    risk: float


class ConvergenceTrace:
    """Per-generation progress log of an iterative search."""

    CSV_HEADER = "elapsed_s,generation,pool_size,objective,risk"

    def __init__(self) -> None:
        self.records: list[TraceRecord] = []

    def append(
        self,
        elapsed_s: float,
        generation: int,
        pool_size: int,
        objective: float,
        risk: float,
    ) -> None:
        self.records.append(
            TraceRecord(elapsed_s, generation, pool_size, objective, risk)
        )

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for r in self.records:
            lines.append(
                f"{r.elapsed_s:.6f},{r.generation},{r.pool_size},"
                f"{r.objective!r},{r.risk!r}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(
            [
                {
                    "elapsed_s": r.elapsed_s,
                    "generation": r.generation,
                    "pool_size": r.pool_size,
                    "objective": r.objective,
                    "risk": r.risk,
                }
                for r in self.records
            ],
            indent=2,
        )


def exhaustive_search(
    ds: LabeledDataset,
    metric: Metric,
    epsilon: float,
    max_configs: int | None = None,
) -> ConfigurationPool:
    """Every feasible configuration with enclosing-ball radius <= epsilon.

    Level-wise: length-k members are extended by one point of an unused
    class and kept when the grown ball still fits the budget; monotonicity
    of the radius under subsets makes this exhaustive.  max_configs aborts
    oversized enumerations with EnumerationCapExceeded.
    """
    cm = CostModel.classical(epsilon, metric)
    blocks = enumerate_blocks(ds, metric, epsilon, max_configs)
    return ConfigurationPool.from_blocks(ds, cm, blocks)


def genetic_search(
    ds: LabeledDataset,
    metric: Metric,
    epsilon: float,
    params: GeneticParams,
    target_objective: float | None = None,
) -> tuple[ConfigurationPool, lp.LpSolution, ConvergenceTrace]:
    """Grow the working set by mutating LP-support configurations.

    Starts from the all-singleton pool; each generation draws s parents
    uniformly from the current support, mutates them by rules drawn with
    the configured weights, inserts offspring that fit the budget, and
    re-solves warm.  Stops on the time limit, on stagnation (a run of
    generations without a single insertion), or once the objective reaches
    target_objective.  The trace records one row per solve.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    cm = CostModel.classical(epsilon, metric)
    n = ds.n_points
    s = params.resolve_samples(ds)
    weights = np.asarray(params.rule_weights, dtype=np.float64)
    probs = weights / weights.sum()
    rng = np.random.default_rng(params.seed)

    pool = ConfigurationPool(ds, cm)
    rp = lp.ReducedProblem.from_pool(pool)
    sol = lp.solve(rp)
    t0 = time.perf_counter()
    trace = ConvergenceTrace()
    trace.append(0.0, 0, len(pool), sol.objective, 1.0 - sol.objective / n)

    generation = 0
    stagnant = 0
    while True:
        if target_objective is not None and sol.objective <= target_objective + 1e-9 * (
            1.0 + abs(target_objective)
        ):
            break
        elapsed = time.perf_counter() - t0
        if elapsed >= params.time_limit:
            break
        if stagnant >= params.stagnation_generations:
            break
        generation += 1
        support = sol.support
        rule_ids = rng.choice(3, size=s, p=probs)
        parent_ids = rng.integers(len(support), size=s)
        inserted = 0
        for t in range(s):
            offspring = propose_offspring(
                support[parent_ids[t]], _RULES[rule_ids[t]], ds, rng
            )
            if offspring is None or offspring in pool:
                continue
            c = cost(offspring, ds, cm)
            if not np.isfinite(c):
                continue
            pool.insert(offspring, c)
            inserted += 1
        if inserted:
            stagnant = 0
            rp = lp.ReducedProblem.from_pool(pool)
            sol = lp.warm_solve(rp, sol)
        else:
            stagnant += 1
        trace.append(
            time.perf_counter() - t0,
            generation,
            len(pool),
            sol.objective,
            1.0 - sol.objective / n,
        )
    return pool, sol, trace
