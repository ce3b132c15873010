"""Column generation for the spread-penalized transport problem.

With the hard budget replaced by the soft cost 1 + (1/tau^2) * sum of
squared distances to the barycenter, every label-distinct configuration is
feasible and enumeration stops being an option beyond desk scale.  The loop
here grows the working set by mutating support configurations and keeps an
offspring only when it violates the current dual constraint (positive
gain), which is exactly the pricing step of column generation; a pool cap
of beta * N with random eviction of inactive members keeps the LP small.

Because the soft cost inflates the objective, the optimal value itself is
not the risk.  The report reprices the optimizer at unit cost: the
corrected risk is 1 - sum(gamma) / N, the penalty actually paid is split
out, and the two recombine to the regularized optimum.
"""

from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass

import numpy as np

from advrisk import lp
from advrisk._exhaustive import EnumerationCapExceeded
from advrisk.configuration import (
    Configuration,
    ConfigurationPool,
    CostModel,
    cost,
)
from advrisk.data import LabeledDataset
from advrisk.geometry import w2_penalty
from advrisk.search import ConvergenceTrace, Rule, propose_offspring

__all__ = [
    "GencolParams",
    "W2RiskReport",
    "gain",
    "gencol_w2",
    "certify_optimality",
]

GAIN_TOL = 1e-10  # insert only strictly profitable columns
CERTIFY_TOL = 1e-8
CERTIFY_CAP = 1_000_000  # full-enumeration certificates are a desk-scale tool

_RULES = (Rule.ADD, Rule.SWAP, Rule.DROP)
# add and swap equally likely, no drops: eviction is the trim's job, and a
# dropped entry only re-creates a subset the LP has already priced
_RULE_PROBS = (0.5, 0.5, 0.0)


@dataclass(frozen=True)
class GencolParams:
    """Knobs of the column-generation loop.

    beta caps the pool at beta * n_points; it must be at least 2 so the cap
    clears the maximal support size N.  samples_per_generation defaults to
    2N when unset.
    """

    tau: float
    beta: int = 3
    samples_per_generation: int | None = None
    time_limit: float = 300.0
    stagnation_generations: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if int(self.beta) != self.beta or self.beta < 2:
            raise ValueError(f"beta must be an integer >= 2, got {self.beta}")
        if self.samples_per_generation is not None and self.samples_per_generation < 1:
            raise ValueError("samples_per_generation must be at least 1")
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if self.stagnation_generations < 1:
            raise ValueError("stagnation_generations must be at least 1")

    def resolve_samples(self, ds: LabeledDataset) -> int:
        if self.samples_per_generation is not None:
            return self.samples_per_generation
        return 2 * ds.n_points


@dataclass(frozen=True)
class W2RiskReport:
    """Risk decomposition of a penalized run, all on the probability scale.

    regularized_value = corrected_risk - penalty_paid holds by construction
    of the cost coefficients; corrected_risk alone is the adversarial risk
    bound.  converged means the run stopped on stagnation; a time-limit
    stop may underestimate the risk and is flagged False.
    """

    regularized_value: float
    corrected_risk: float
    penalty_paid: float
    converged: bool

    def to_json(self, tau: float, beta: int, elapsed_s: float) -> str:
        return json.dumps(
            {
                "tau": tau,
                "beta": beta,
                "regularized_value": self.regularized_value,
                "corrected_risk": self.corrected_risk,
                "penalty_paid": self.penalty_paid,
                "converged": self.converged,
                "elapsed_s": elapsed_s,
            },
            indent=2,
        )


def gain(
    candidate: Configuration,
    dual: np.ndarray,
    ds: LabeledDataset,
    tau: float,
) -> float:
    """Dual-constraint violation of a candidate column.

    gain = sum of the candidate's duals minus its penalized cost; positive
    gain means adding the column can lower the LP objective.
    """
    c = cost(tuple(candidate), ds, CostModel.w2(tau))
    return float(np.asarray(dual, dtype=np.float64)[list(candidate)].sum() - c)


def _report(
    sol: lp.LpSolution, ds: LabeledDataset, tau: float, converged: bool
) -> W2RiskReport:
    n = ds.n_points
    mass = sum(sol.gamma.values())
    penalty = 0.0
    # repriced from the geometry, not from the stored coefficients
    for r, g in sol.gamma.items():
        if len(r) > 1:
            penalty += w2_penalty(ds.features[list(r)], tau) * g
    return W2RiskReport(
        regularized_value=1.0 - sol.objective / n,
        corrected_risk=1.0 - mass / n,
        penalty_paid=penalty / n,
        converged=converged,
    )


def gencol_w2(
    ds: LabeledDataset,
    params: GencolParams,
) -> tuple[ConfigurationPool, lp.LpSolution, W2RiskReport, ConvergenceTrace]:
    """Grow, cap, and re-solve until the dual prices out all offspring.

    Starts from the all-singleton pool.  Each generation first trims the
    pool back when it exceeds beta * N (removing N random members that are
    neither singletons nor in the current support or basis, so the solution
    at hand stays feasible and the objective cannot move), then draws
    parents uniformly from the support, mutates them, and inserts offspring
    with gain above the insertion tolerance.  Stops on the time limit or on
    a run of stagnation_generations generations without an insertion; only
    the latter counts as converged.  The trace records the corrected risk.
    """
    cm = CostModel.w2(params.tau)
    n = ds.n_points
    s = params.resolve_samples(ds)
    cap = params.beta * n
    rng = np.random.default_rng(params.seed)

    pool = ConfigurationPool(ds, cm)
    rp = lp.ReducedProblem.from_pool(pool)
    sol = lp.solve(rp)
    t0 = time.perf_counter()
    trace = ConvergenceTrace()
    trace.append(0.0, 0, len(pool), sol.objective, 1.0 - sum(sol.gamma.values()) / n)

    generation = 0
    stagnant = 0
    while True:
        if time.perf_counter() - t0 >= params.time_limit:
            break
        if stagnant >= params.stagnation_generations:
            break
        generation += 1
        if len(pool) > cap:
            pool.trim_inactive(set(sol.gamma) | set(sol.basis), n, rng)
            rp = lp.ReducedProblem.from_pool(pool)
            sol = lp.warm_solve(rp, sol)
        support = sol.support
        dual = sol.dual
        rule_ids = rng.choice(3, size=s, p=_RULE_PROBS)
        parent_ids = rng.integers(len(support), size=s)
        inserted = 0
        for t in range(s):
            offspring = propose_offspring(
                support[parent_ids[t]], _RULES[rule_ids[t]], ds, rng
            )
            if offspring is None or offspring in pool:
                continue
            c = cost(offspring, ds, cm)
            if not dual[list(offspring)].sum() - c > GAIN_TOL:
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
            1.0 - sum(sol.gamma.values()) / n,
        )
    converged = stagnant >= params.stagnation_generations
    return pool, sol, _report(sol, ds, params.tau, converged), trace


def certify_optimality(
    solution: lp.LpSolution,
    ds: LabeledDataset,
    tau: float,
    max_configs: int = CERTIFY_CAP,
) -> tuple[bool, float]:
    """Check the dual against every label-distinct configuration.

    The penalized problem has no budget, so the full configuration set is
    the product over classes of (one member or none): prod(n_c + 1) - 1
    columns in total.  When that count fits under max_configs, the maximal
    gain over all of them is computed exactly; a maximum at or below the
    certification tolerance proves the reduced solution optimal for the
    full LP.
    """
    counts = [int(c) for c in ds.class_counts]
    total = 1
    for c in counts:
        total *= c + 1
    total -= 1
    if total > max_configs:
        raise EnumerationCapExceeded(
            f"certificate needs {total} configurations, cap is {max_configs}"
        )
    u = np.asarray(solution.dual, dtype=np.float64)
    feats = ds.features
    members = [np.flatnonzero(ds.labels == c) for c in range(1, ds.n_classes + 1)]
    inv_tau2 = 1.0 / (tau * tau)
    max_gain = -np.inf
    for m in range(1, ds.n_classes + 1):
        for chosen in itertools.combinations(range(ds.n_classes), m):
            grids = np.meshgrid(*(members[c] for c in chosen), indexing="ij")
            idx = np.stack([g.ravel() for g in grids], axis=1)
            if m == 1:
                best = float(u[idx[:, 0]].max() - 1.0)
                max_gain = max(max_gain, best)
                continue
            # chunked so wide feature spaces stay within memory
            step = max(1, (1 << 22) // (m * feats.shape[1]))
            for lo in range(0, idx.shape[0], step):
                block = idx[lo : lo + step]
                pts = feats[block]
                mean = pts.mean(axis=1, keepdims=True)
                pen = ((pts - mean) ** 2).sum(axis=(1, 2)) * inv_tau2
                gains = u[block].sum(axis=1) - 1.0 - pen
                max_gain = max(max_gain, float(gains.max()))
    return bool(max_gain <= CERTIFY_TOL), float(max_gain)
