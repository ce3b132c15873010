"""Exact solver for the reduced transport linear program.

The problem: min c^T gamma over gamma >= 0 with one equality row per data
point, sum_{r: i in r} gamma(r) = rhs_i.  Columns are 0/1 incidence vectors
of point-index groups (configurations), so the all-singleton basis is an
identity matrix: simplex can start there with no Phase 1.  The solver is a
revised simplex with a dense basis inverse maintained by rank-1 updates and
periodically refactorized from a sparse LU of the basis.

Column counts reach into the millions on exhaustive instances, so pricing is
vectorized over per-length index blocks and large problems are solved by
sifting: an inner simplex runs on a working subset of columns and a full
pricing sweep pulls in violated columns until none remain.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import blas

from advrisk.configuration import Configuration, ConfigurationPool, canonical

__all__ = [
    "LpStatus",
    "ReducedProblem",
    "LpSolution",
    "SolutionCheck",
    "solve",
    "warm_solve",
    "check_solution",
    "export_lp",
]

PIVOT_TOL = 1e-10
STABLE_PIVOT = 1e-7  # below this, re-derive the pivot column from a fresh LU
FEAS_TOL = 1e-8
DUAL_TOL = 1e-9  # termination margin; the public invariant allows 1e-8
REFACTOR_EVERY = 128
MAX_REPAIRS = 5
SIFT_THRESHOLD = 50_000  # columns; above this the working-set scheme kicks in
PRICE_CHUNK = 1 << 19
PRUNE_SLACK = 1e-6  # working columns with larger reduced cost are dropped
BUFFER_CAP = 1 << 18  # violated columns remembered between full sweeps
PERTURB_SCALE = 1e-7


def _perturbation(n: int) -> np.ndarray:
    """Fixed pseudorandom direction for the anti-degeneracy rhs shift.

    Deterministic in n only, so repeated solves (and warm restarts) of the
    same problem see the identical perturbed rhs.
    """
    return np.random.default_rng(0x5EED).uniform(1.0, 2.0, n)


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


class ReducedProblem:
    """Sparse column-form LP over a working set of configurations.

    Storage is per-length blocks: an (n_m, m) int32 index matrix plus an
    (n_m,) float64 cost vector for each configuration length m.  All stored
    costs must be finite; infinite-cost columns are dropped before entry.
    """

    def __init__(self, n_points: int, blocks, rhs: np.ndarray | None = None,
                 validate: bool = True) -> None:
        if n_points < 1:
            raise ValueError("need at least one point")
        self.n_points = int(n_points)
        self.blocks: list[tuple[int, np.ndarray, np.ndarray]] = []
        for m, idx, cost in sorted(blocks, key=lambda b: b[0]):
            idx = np.ascontiguousarray(idx, dtype=np.int32).reshape(-1, m)
            cost = np.ascontiguousarray(cost, dtype=np.float64)
            if idx.shape[0] != cost.shape[0]:
                raise ValueError("index and cost row counts differ")
            if idx.shape[0] == 0:
                continue
            if validate:
                if idx.min() < 0 or idx.max() >= n_points:
                    raise ValueError("column index out of range")
                if m > 1 and not np.all(np.diff(idx, axis=1) > 0):
                    raise ValueError("column indices must be strictly increasing")
                if not np.all(np.isfinite(cost)):
                    raise ValueError("all stored cost coefficients must be finite")
            self.blocks.append((m, idx, cost))
        self.n_columns = sum(b[1].shape[0] for b in self.blocks)
        if self.n_columns == 0:
            raise ValueError("no columns")
        self._offsets = np.cumsum([0] + [b[1].shape[0] for b in self.blocks])
        if rhs is None:
            rhs = np.ones(n_points)
        self.rhs = np.ascontiguousarray(rhs, dtype=np.float64)
        if self.rhs.shape != (n_points,) or not np.all(self.rhs > 0):
            raise ValueError("rhs must be positive with one entry per point")
        self._col_index: dict[Configuration, int] | None = None
        self._lex_orders: dict[int, np.ndarray] = {}

    @classmethod
    def from_columns(
        cls, n_points: int, columns: Iterable[tuple[Sequence[int], float]]
    ) -> "ReducedProblem":
        """Build from explicit (configuration, finite cost) pairs."""
        by_len: dict[int, tuple[list, list]] = {}
        for indices, c in columns:
            r = canonical(indices)
            if not np.isfinite(c):
                raise ValueError(f"column {r} has non-finite cost")
            rows, costs = by_len.setdefault(len(r), ([], []))
            rows.append(r)
            costs.append(float(c))
        blocks = [
            (m, np.array(rows, dtype=np.int32), np.array(costs))
            for m, (rows, costs) in by_len.items()
        ]
        return cls(n_points, blocks)

    @classmethod
    def from_pool(cls, pool: ConfigurationPool) -> "ReducedProblem":
        """Pool view with infinite-cost members excluded."""
        blocks = []
        for m, idx, cost in pool.blocks():
            keep = np.isfinite(cost)
            if np.any(keep):
                blocks.append((m, idx[keep], cost[keep]))
        return cls(pool.dataset.n_points, blocks, validate=False)

    def column(self, gid: int) -> tuple[Configuration, float]:
        b = int(np.searchsorted(self._offsets, gid, side="right") - 1)
        m, idx, cost = self.blocks[b]
        row = gid - self._offsets[b]
        return tuple(int(v) for v in idx[row]), float(cost[row])

    def iter_columns(self) -> Iterator[tuple[Configuration, float]]:
        for m, idx, cost in self.blocks:
            for row in range(idx.shape[0]):
                yield tuple(int(v) for v in idx[row]), float(cost[row])

    def column_index(self) -> dict[Configuration, int]:
        """Lazy configuration -> global column id map.

        Duplicate configurations resolve to the cheapest copy (lowest id on
        ties): that is the only copy an optimal basis can carry at positive
        level, so it is the right representative for warm starts.
        """
        if self._col_index is None:
            index: dict[Configuration, int] = {}
            best_cost: dict[Configuration, float] = {}
            gid = 0
            for m, idx, cost in self.blocks:
                for row in range(idx.shape[0]):
                    key = tuple(int(v) for v in idx[row])
                    c = float(cost[row])
                    if key not in index or c < best_cost[key]:
                        index[key] = gid
                        best_cost[key] = c
                    gid += 1
            self._col_index = index
        return self._col_index

    def find_column(self, r: Sequence[int]) -> int:
        """Global id of one copy of configuration r, or -1 if absent.

        Binary search over a lazily built lexicographic order per block, so
        occasional membership tests stay cheap on multi-million column
        problems where the full dictionary would dominate memory.
        """
        key = tuple(int(v) for v in r)
        m = len(key)
        for b, (bm, idx, cost) in enumerate(self.blocks):
            if bm != m:
                continue
            order = self._lex_orders.get(b)
            if order is None:
                order = np.lexsort(idx.T[::-1])
                self._lex_orders[b] = order
            lo, hi = 0, order.size
            while lo < hi:
                mid = (lo + hi) // 2
                row = tuple(int(v) for v in idx[order[mid]])
                if row < key:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < order.size and tuple(int(v) for v in idx[order[lo]]) == key:
                return int(self._offsets[b] + order[lo])
            return -1
        return -1

    def covered_points(self) -> np.ndarray:
        mask = np.zeros(self.n_points, dtype=bool)
        for _, idx, _ in self.blocks:
            mask[idx.ravel()] = True
        return mask


@dataclass(frozen=True)
class LpSolution:
    """Basic primal solution (support only), optimal duals, and the basis."""

    gamma: dict[Configuration, float]
    dual: np.ndarray
    objective: float
    status: LpStatus
    basis: tuple[Configuration, ...]
    n_pivots: int = 0

    @property
    def objective_per_point(self) -> float:
        """Objective on the probability scale (masses sum to N, not 1)."""
        return self.objective / max(len(self.dual), 1)

    @property
    def support(self) -> tuple[Configuration, ...]:
        return tuple(self.gamma)


@dataclass(frozen=True)
class SolutionCheck:
    """Violation magnitudes for the four optimality invariants."""

    support_size: int
    primal_residual: float
    dual_violation: float
    duality_gap: float
    complementarity: float
    ok: bool


def solve(rp: ReducedProblem, max_pivots: int | None = None) -> LpSolution:
    """Solve to a basic optimal solution with optimal duals.

    Deterministic given identical column order: Dantzig entering rule with
    lowest-index tie break; leaving ties resolve lexicographically, which
    keeps the heavily degenerate transport structure from cycling.
    """
    return _simplex(rp, warm_basis=None, max_pivots=max_pivots)


def warm_solve(
    rp: ReducedProblem, previous: LpSolution, max_pivots: int | None = None
) -> LpSolution:
    """Re-solve after column changes, starting from the previous basis.

    Falls back to a cold solve when the previous basis does not map into the
    new problem (trimmed members, artificial columns, or size mismatch).
    """
    warm: np.ndarray | None = None
    if previous.status is not LpStatus.INFEASIBLE and len(previous.basis) == rp.n_points:
        index = rp.column_index()
        ids = [index.get(r) for r in previous.basis]
        if all(g is not None for g in ids):
            warm = np.array(ids, dtype=np.int64)
    return _simplex(rp, warm_basis=warm, max_pivots=max_pivots)


def check_solution(rp: ReducedProblem, sol: LpSolution, tol: float = FEAS_TOL) -> SolutionCheck:
    """Verify sparsity, primal feasibility, dual feasibility over every
    column, strong duality, and complementary slackness.

    All quantities are recomputed from the problem data; nothing is taken
    from the solver's bookkeeping except the solution itself.  Support costs
    use the cheapest duplicate of each configuration, the only copy that can
    be active at an optimum.
    """
    n = rp.n_points
    support = len(sol.gamma)
    residual = -rp.rhs.copy()
    for r, g in sol.gamma.items():
        residual[list(r)] += g
    primal_residual = float(np.max(np.abs(residual)))
    support_cost = _min_costs_of(rp, list(sol.gamma))
    comp = 0.0
    objective = 0.0
    for r, g in sol.gamma.items():
        c = support_cost[r]
        objective += c * g
        comp = max(comp, abs(sum(sol.dual[i] for i in r) - c))
    dual_violation = 0.0
    for m, idx, cost in rp.blocks:
        for lo in range(0, idx.shape[0], PRICE_CHUNK):
            hi = min(lo + PRICE_CHUNK, idx.shape[0])
            slack = sol.dual[idx[lo:hi]].sum(axis=1) - cost[lo:hi]
            dual_violation = max(dual_violation, float(slack.max(initial=-np.inf)))
    dual_violation = max(dual_violation, 0.0)
    gap = max(
        abs(sol.objective - float(sol.dual @ rp.rhs)),
        abs(sol.objective - objective),
    )
    ok = bool(
        support <= n
        and primal_residual <= tol * n
        and dual_violation <= tol
        and gap <= tol * (1.0 + abs(sol.objective))
        and comp <= tol
    )
    return SolutionCheck(support, primal_residual, dual_violation, gap, comp, ok)


def _min_costs_of(
    rp: ReducedProblem, configs: list[Configuration]
) -> dict[Configuration, float]:
    """Cheapest stored cost for each requested configuration (+inf if absent).

    Works block-vectorized with a hashed prefilter so it stays fast on
    million-column problems; hash hits are verified exactly.
    """
    out: dict[Configuration, float] = {r: float("inf") for r in configs}
    by_len: dict[int, np.ndarray] = {}
    for r in configs:
        by_len.setdefault(len(r), []).append(r)
    by_len = {m: np.asarray(rs, dtype=np.int32) for m, rs in by_len.items()}
    for m, idx, cost in rp.blocks:
        targets = by_len.get(m)
        if targets is None:
            continue
        weights = np.full(m, 0x9E3779B97F4A7C15, dtype=np.uint64) ** np.arange(
            m, dtype=np.uint64
        )
        target_hash = (targets.astype(np.uint64) * weights).sum(axis=1)
        for lo in range(0, idx.shape[0], PRICE_CHUNK):
            hi = min(lo + PRICE_CHUNK, idx.shape[0])
            row_hash = (idx[lo:hi].astype(np.uint64) * weights).sum(axis=1)
            hits = np.flatnonzero(np.isin(row_hash, target_hash))
            for row in hits:
                key = tuple(int(v) for v in idx[lo + row])
                if key in out:
                    out[key] = min(out[key], float(cost[lo + row]))
    return out


def export_lp(rp: ReducedProblem, path) -> None:
    """Write the instance in LP text interchange format (external checking).

    Row-oriented, so intended for desk-scale instances, not million-column
    pools.
    """
    rows: list[list[int]] = [[] for _ in range(rp.n_points)]
    gid = 0
    costs = []
    for m, idx, cost in rp.blocks:
        for row in range(idx.shape[0]):
            for i in idx[row]:
                rows[int(i)].append(gid)
            costs.append(float(cost[row]))
            gid += 1
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("Minimize\n obj: ")
        fh.write(" + ".join(f"{c:.17g} x{j}" for j, c in enumerate(costs)))
        fh.write("\nSubject To\n")
        for i, cols in enumerate(rows):
            terms = " + ".join(f"x{j}" for j in cols) if cols else "0 x0"
            fh.write(f" c{i}: {terms} = {rp.rhs[i]:.17g}\n")
        fh.write("End\n")


# --- revised simplex core --------------------------------------------------


class _Simplex:
    """Revised simplex over a ReducedProblem with artificial fallback columns.

    Global ids 0..n_columns-1 are real.  In covering mode each row also gets
    a zero-cost surplus column (-1 entry) right after the real ids, turning
    the per-point equalities into >= constraints.  The last N ids are
    artificial unit columns with a large cost, used only when a row has no
    singleton to anchor the start basis.
    """

    def __init__(
        self, rp: ReducedProblem, max_pivots: int, covering: bool = False
    ) -> None:
        self.rp = rp
        self.n = rp.n_points
        self.max_pivots = max_pivots
        max_cost = max(float(cost.max()) for _, _, cost in rp.blocks)
        self.big_m = (self.n + 1.0) * (1.0 + max_cost)
        self.n_real = rp.n_columns
        self.n_slack = self.n if covering else 0
        self.art_base = self.n_real + self.n_slack
        self.pivots = 0
        self.fresh = False  # binv straight from a factorization, no updates yet
        self.repairs = 0
        self.in_basis: set[int] = set()
        # anti-degeneracy: solve against a slightly perturbed rhs so ratio
        # tests strictly improve; the exact rhs is restored at optimality
        self.rhs = rp.rhs * (1.0 + PERTURB_SCALE * _perturbation(self.n))

    # -- column access -----------------------------------------------------

    def col_rows(self, gid: int) -> np.ndarray:
        if gid >= self.art_base:
            return np.array([gid - self.art_base], dtype=np.int32)
        if gid >= self.n_real:
            return np.array([gid - self.n_real], dtype=np.int32)
        rp = self.rp
        b = int(np.searchsorted(rp._offsets, gid, side="right") - 1)
        return rp.blocks[b][1][gid - rp._offsets[b]]

    def col_sign(self, gid: int) -> float:
        """Surplus columns carry a -1 entry; everything else +1."""
        return -1.0 if self.n_real <= gid < self.art_base else 1.0

    def col_cost(self, gid: int) -> float:
        if gid >= self.art_base:
            return self.big_m
        if gid >= self.n_real:
            return 0.0
        rp = self.rp
        b = int(np.searchsorted(rp._offsets, gid, side="right") - 1)
        return float(rp.blocks[b][2][gid - rp._offsets[b]])

    # -- basis maintenance ---------------------------------------------------

    def set_basis(self, basis: np.ndarray) -> bool:
        """Adopt a basis (array of N global ids); returns False if singular."""
        self.basis = basis.astype(np.int64).copy()
        return self.refactorize()

    def refactorize(self) -> bool:
        n = self.n
        cols = []
        rows = []
        data = []
        for t, gid in enumerate(self.basis):
            r = self.col_rows(int(gid))
            s = self.col_sign(int(gid))
            rows.extend(int(v) for v in r)
            cols.extend([t] * len(r))
            data.extend([s] * len(r))
        mat = sp.csc_matrix((data, (rows, cols)), shape=(n, n))
        try:
            lu = spla.splu(mat)
            binv = lu.solve(np.eye(n))
        except RuntimeError:
            return False
        if not np.all(np.isfinite(binv)):
            return False
        # Fortran order so the rank-1 pivot update can run in place via dger
        self.binv = np.asfortranarray(binv)
        self.c_basis = np.array([self.col_cost(int(g)) for g in self.basis])
        self.x = self.binv @ self.rhs
        self.in_basis = set(int(g) for g in self.basis)
        self.fresh = True
        return True

    def identity_start(self) -> None:
        """Singleton columns where available, artificials elsewhere."""
        best = np.full(self.n, np.iinfo(np.int64).max, dtype=np.int64)
        for b, (m, idx, cost) in enumerate(self.rp.blocks):
            if m != 1:
                continue
            gids = self.rp._offsets[b] + np.arange(idx.shape[0], dtype=np.int64)
            # lowest singleton column id per row wins (deterministic)
            np.minimum.at(best, idx[:, 0].astype(np.int64), gids)
        artificial = np.arange(self.art_base, self.art_base + self.n, dtype=np.int64)
        self.basis = np.where(best < np.iinfo(np.int64).max, best, artificial)
        self.binv = np.eye(self.n, order="F")
        self.c_basis = np.array([self.col_cost(int(g)) for g in self.basis])
        self.x = self.rhs.copy()
        self.in_basis = set(int(g) for g in self.basis)
        self.fresh = True

    def partition_start(self) -> None:
        """Start from a greedy disjoint cover instead of bare singletons.

        Per-point equality rows make the objective the total carried mass,
        so a cover of the points by few large configurations starts close
        to optimal.  Parts are picked greedily, largest first, in parallel
        claim rounds (lowest column id wins each contested point); rows no
        part covers fall back to their singleton.  Each part of size m
        enters the basis with the singletons of its m-1 higher-rhs members
        so the start is a feasible basic point.
        """
        n = self.n
        singleton = np.full(n, -1, dtype=np.int64)
        for b, (m, idx, cost) in enumerate(self.rp.blocks):
            if m == 1:
                singleton[idx[:, 0]] = self.rp._offsets[b] + np.arange(
                    idx.shape[0], dtype=np.int64
                )
        if (singleton < 0).any():
            self.identity_start()
            return
        covered = np.zeros(n, dtype=bool)
        parts: list[int] = []
        for b in range(len(self.rp.blocks) - 1, -1, -1):
            m, idx, cost = self.rp.blocks[b]
            if m == 1:
                continue
            alive = np.flatnonzero(~covered[idx].any(axis=1))
            while alive.size:
                claim = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
                rows = idx[alive]
                np.minimum.at(claim, rows.ravel(), np.repeat(alive, m))
                win = alive[(claim[rows] == alive[:, None]).all(axis=1)]
                covered[idx[win]] = True
                parts.extend((self.rp._offsets[b] + win).tolist())
                alive = alive[~covered[idx[alive]].any(axis=1)]
        basis: list[int] = []
        for gid in parts:
            rows = self.col_rows(gid)
            basis.append(gid)
            if self.n_slack:
                # the part carries the largest rhs in its group; surplus
                # columns absorb the slightly smaller rows
                j = int(rows[np.argmax(self.rhs[rows])])
                basis.extend(int(self.n_real + r) for r in rows if r != j)
            else:
                j = int(rows[np.argmin(self.rhs[rows])])
                basis.extend(int(singleton[r]) for r in rows if r != j)
        for r in np.flatnonzero(~covered):
            basis.append(int(singleton[r]))
        self.basis = np.array(basis, dtype=np.int64)
        if not self.refactorize() or self.x.min() < -FEAS_TOL:
            self.identity_start()

    def repair(self) -> None:
        """Restart from the all-singleton basis after irrecoverable drift.

        Always nonsingular, and the working set keeps every column found so
        far, so only pivot work is lost.  Bounded: persistent singularity
        means the problem data itself is broken.
        """
        self.repairs += 1
        if self.repairs > MAX_REPAIRS:
            raise RuntimeError("basis repeatedly singular; problem data corrupt?")
        self.identity_start()

    def make_fresh(self) -> None:
        """Guarantee an update-free factorization, repairing if singular.

        Rank-1 updates drift; when drifted numbers pick an entering column
        that is already basic or a pivot element that is really zero, the
        cure is a fresh LU.  If the LU itself fails (the drift let a truly
        dependent column in), fall back to the all-singleton start.
        """
        if self.fresh:
            return
        if not self.refactorize():
            self.repair()

    # -- pricing -------------------------------------------------------------

    def duals(self) -> np.ndarray:
        return self.c_basis @ self.binv

    def price_working(
        self, u: np.ndarray, working: list[np.ndarray], cap: int = 64
    ) -> tuple[np.ndarray, np.ndarray] | tuple[None, None]:
        """Up to `cap` most violated working columns, most negative first.

        working[b] holds the row numbers of block b currently in play.
        Ties order by global id so runs are deterministic.
        """
        ids: list[np.ndarray] = []
        rcs: list[np.ndarray] = []
        for b, (m, idx, cost) in enumerate(self.rp.blocks):
            rows = working[b]
            if rows.size == 0:
                continue
            rc = cost[rows] - u[idx[rows]].sum(axis=1)
            neg = np.flatnonzero(rc < -DUAL_TOL)
            if neg.size == 0:
                continue
            if neg.size > cap:
                neg = neg[np.argpartition(rc[neg], cap)[:cap]]
            ids.append(self.rp._offsets[b] + rows[neg])
            rcs.append(rc[neg])
        if not ids:
            return None, None
        i = np.concatenate(ids)
        r = np.concatenate(rcs)
        if i.size > cap:
            pick = np.argpartition(r, cap)[:cap]
            i, r = i[pick], r[pick]
        order = np.lexsort((i, r))
        return i[order], r[order]

    def all_candidates(
        self, u: np.ndarray, working: list[np.ndarray], cap: int = 64
    ) -> tuple[np.ndarray, np.ndarray] | tuple[None, None]:
        """Working-set candidates plus, in covering mode, surplus columns.

        A surplus column prices negative exactly when its row dual does.
        """
        ids, rcs = self.price_working(u, working, cap)
        if self.n_slack:
            srows = np.flatnonzero(u < -DUAL_TOL)
            if srows.size:
                if srows.size > 16:
                    srows = srows[np.argpartition(u[srows], 16)[:16]]
                sids = self.n_real + srows.astype(np.int64)
                srcs = u[srows]
                if ids is None:
                    ids, rcs = sids, srcs
                else:
                    ids = np.concatenate([ids, sids])
                    rcs = np.concatenate([rcs, srcs])
                order = np.lexsort((ids, rcs))
                ids, rcs = ids[order], rcs[order]
        if ids is None:
            return None, None
        return ids, rcs

    def pick_entering(
        self, cand_ids: np.ndarray, cand_rcs: np.ndarray
    ) -> tuple[int, np.ndarray]:
        """Greatest-improvement choice among priced candidates.

        Degenerate problems are full of violated columns that cannot move
        (their ratio test blocks at ~0); picking by reduced cost alone walks
        through them one useless pivot at a time.  Estimating the actual
        objective step theta * |rc| per candidate costs one batched ftran
        and skips the blocked ones.
        """
        w_all = np.empty((self.n, cand_ids.size))
        ri = np.flatnonzero(cand_ids < self.n_real)
        si = np.flatnonzero(cand_ids >= self.n_real)
        if ri.size:
            rows_list = [self.col_rows(int(cand_ids[j])) for j in ri]
            lens = np.fromiter((len(r) for r in rows_list), np.int64, len(rows_list))
            cat = np.concatenate(rows_list)
            bounds = np.concatenate(([0], np.cumsum(lens)[:-1]))
            w_all[:, ri] = np.add.reduceat(self.binv[:, cat], bounds, axis=1)
        if si.size:
            w_all[:, si] = -self.binv[:, (cand_ids[si] - self.n_real).astype(np.int64)]
        pos = w_all > PIVOT_TOL
        safe = np.where(pos, w_all, 1.0)
        ratios = np.where(pos, np.maximum(self.x[:, None], 0.0) / safe, np.inf)
        theta = ratios.min(axis=0)
        gain = np.where(np.isfinite(theta), theta, 0.0) * (-cand_rcs)
        j = int(np.argmax(gain))
        if gain[j] <= 0.0:
            j = 0  # all blocked: fall back to the most negative reduced cost
        return int(cand_ids[j]), np.ascontiguousarray(w_all[:, j])

    def price_full(self, u: np.ndarray, top: int) -> tuple[np.ndarray, float]:
        """Full sweep over all columns; returns up to `top` most violated
        global ids (unordered) and the minimum reduced cost overall.
        """
        cand_ids: list[np.ndarray] = []
        cand_rc: list[np.ndarray] = []
        overall = 0.0
        for b, (m, idx, cost) in enumerate(self.rp.blocks):
            n_rows = idx.shape[0]
            for lo in range(0, n_rows, PRICE_CHUNK):
                hi = min(lo + PRICE_CHUNK, n_rows)
                rc = cost[lo:hi] - u[idx[lo:hi]].sum(axis=1)
                neg = np.flatnonzero(rc < -DUAL_TOL)
                if neg.size:
                    overall = min(overall, float(rc[neg].min()))
                    if neg.size > top:
                        neg = neg[np.argpartition(rc[neg], top)[:top]]
                    cand_ids.append(self.rp._offsets[b] + lo + neg.astype(np.int64))
                    cand_rc.append(rc[neg])
        if not cand_ids:
            return np.empty(0, dtype=np.int64), overall
        ids = np.concatenate(cand_ids)
        rcs = np.concatenate(cand_rc)
        if ids.size > top:
            pick = np.argpartition(rcs, top)[:top]
            ids = ids[pick]
        return ids, overall

    def rc_of_ids(self, ids: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Reduced costs for an arbitrary array of real global ids."""
        rc = np.empty(ids.shape[0])
        for b, (m, idx, cost) in enumerate(self.rp.blocks):
            lo, hi = self.rp._offsets[b], self.rp._offsets[b + 1]
            sel = np.flatnonzero((ids >= lo) & (ids < hi))
            if sel.size == 0:
                continue
            rows = ids[sel] - lo
            rc[sel] = cost[rows] - u[idx[rows]].sum(axis=1)
        return rc

    def member_row(self, ids: np.ndarray, pos: int) -> np.ndarray:
        """One member row per column: pos 0 for the first, -1 for the last."""
        out = np.empty(ids.shape[0], dtype=np.int64)
        for b, (m, idx, cost) in enumerate(self.rp.blocks):
            lo, hi = self.rp._offsets[b], self.rp._offsets[b + 1]
            sel = np.flatnonzero((ids >= lo) & (ids < hi))
            if sel.size == 0:
                continue
            out[sel] = idx[ids[sel] - lo, pos if pos >= 0 else m + pos]
        return out

    def spread(
        self, ids: np.ndarray, rc: np.ndarray, top: int, cap: int
    ) -> np.ndarray:
        """Most-negative selection capped per leading and trailing row.

        Violated columns cluster: the global top of the reduced-cost order
        is near-copies covering the same few points, and pivoting in one
        fixes the duals for all of them.  Capping how many picks share a
        first or last member row keeps a batch informative while staying
        fully vectorised (grouped cumulative counts on a sorted key).
        """
        k = ids.size
        if k <= top:
            return ids
        sel = np.argsort(rc, kind="stable")
        for pos in (0, -1):
            keys = self.member_row(ids[sel], pos)
            o = np.argsort(keys, kind="stable")
            sk = keys[o]
            starts = np.r_[0, np.flatnonzero(np.diff(sk)) + 1]
            lens = np.diff(np.r_[starts, sk.size])
            within = np.arange(sk.size) - np.repeat(starts, lens)
            keep = o[within < cap]
            keep.sort()  # restore most-negative-first order
            sel = sel[keep]
        return ids[sel[:top]]

    # -- pivoting ------------------------------------------------------------

    def ftran(self, gid: int) -> np.ndarray:
        rows = self.col_rows(gid)
        if len(rows) == 1:
            v = self.binv[:, int(rows[0])].copy()
        else:
            v = self.binv[:, rows].sum(axis=1)
        return -v if self.col_sign(gid) < 0 else v

    def ratio_test(self, w: np.ndarray) -> int | None:
        """Leaving row by minimum ratio, ties broken lexicographically.

        The lexicographic rule (compare binv rows scaled by the pivot
        element, column by column) emulates an infinitesimal perturbation of
        the rhs, which blocks cycling on this heavily degenerate problem
        class without the long walks of Bland's rule.
        """
        pos = np.flatnonzero(w > PIVOT_TOL)
        if pos.size == 0:
            return None
        ratios = self.x[pos] / w[pos]
        ratios = np.maximum(ratios, 0.0)  # degenerate negatives clamp to 0
        theta = ratios.min()
        ties = pos[ratios <= theta + 1e-10 * (1.0 + theta)]
        if ties.size == 1:
            return int(ties[0])
        for col in range(self.n):
            vals = self.binv[ties, col] / w[ties]
            m = vals.min()
            ties = ties[vals <= m + 1e-12 * (1.0 + abs(m))]
            if ties.size == 1:
                return int(ties[0])
        # numerically identical rows; prefer the largest pivot element
        return int(ties[np.argmax(w[ties])])

    def pivot(self, gid: int, t: int, w: np.ndarray) -> None:
        theta = max(self.x[t] / w[t], 0.0)
        self.x -= theta * w
        self.x[t] = theta
        pivot_row = self.binv[t] / w[t]
        # binv -= outer(w, pivot_row), in place (binv is Fortran-ordered)
        blas.dger(-1.0, w, pivot_row, a=self.binv, overwrite_a=1)
        self.binv[t] = pivot_row
        self.in_basis.discard(int(self.basis[t]))
        self.basis[t] = gid
        self.in_basis.add(int(gid))
        self.c_basis[t] = self.col_cost(gid)
        self.pivots += 1
        self.fresh = False
        # dividing by a near-zero pivot wrecks binv; rebuild immediately
        if self.pivots % REFACTOR_EVERY == 0 or w[t] < 10.0 * STABLE_PIVOT:
            self.make_fresh()

    # -- main loop -----------------------------------------------------------

    def run(self, working: list[np.ndarray]) -> LpStatus:
        top = max(8 * self.n, 16)
        full = all(
            working[b].size == idx.shape[0]
            for b, (_, idx, _) in enumerate(self.rp.blocks)
        )
        # ids found violated by the last full sweep but not yet fed to the
        # inner loop; re-pricing this buffer costs microseconds per entry,
        # so the expensive full sweep only runs once the buffer is clean
        buffer = np.empty(0, dtype=np.int64)
        while True:
            status = self._inner(working, budget=None if full else 2 * self.n)
            if status is not LpStatus.OPTIMAL:
                return status
            # optimality is only ever declared off a fresh factorization
            self.make_fresh()
            u = self.duals()
            if full:
                cand_ids, _ = self.all_candidates(u, working)
                if cand_ids is None:
                    return LpStatus.OPTIMAL
                continue
            self.prune_working(working, u)
            surplus_neg = self.n_slack and float(u.min()) < -DUAL_TOL
            if buffer.size:
                rc = self.rc_of_ids(buffer, u)
                neg = rc < -DUAL_TOL
                buffer, rc = buffer[neg], rc[neg]
            if not buffer.size:
                ids, min_rc = self.price_full(u, 4 * BUFFER_CAP)
                if min_rc >= -DUAL_TOL and not surplus_neg:
                    return LpStatus.OPTIMAL
                rc = self.rc_of_ids(ids, u)
                buffer = self.spread(ids, rc, BUFFER_CAP, cap=256)
                rc = self.rc_of_ids(buffer, u)
            feed = self.spread(buffer, rc, top, cap=16)
            buffer = np.setdiff1d(buffer, feed, assume_unique=True)
            self._augment(working, feed)

    def prune_working(self, working: list[np.ndarray], u: np.ndarray) -> None:
        """Drop working columns priced clearly nonnegative; keep the basis.

        The working set otherwise accumulates every column any sweep pulled
        in, and per-pivot pricing scans all of it.
        """
        for b, (m, idx, cost) in enumerate(self.rp.blocks):
            rows = working[b]
            if rows.size == 0:
                continue
            rc = cost[rows] - u[idx[rows]].sum(axis=1)
            keep = rows[rc <= PRUNE_SLACK]
            lo, hi = self.rp._offsets[b], self.rp._offsets[b + 1]
            basic = np.array(
                sorted(g - lo for g in self.in_basis if lo <= g < min(hi, self.n_real)),
                dtype=np.int64,
            )
            working[b] = np.union1d(keep, basic)

    def _augment(self, working: list[np.ndarray], ids: np.ndarray) -> None:
        for b in range(len(self.rp.blocks)):
            lo, hi = self.rp._offsets[b], self.rp._offsets[b + 1]
            rows = ids[(ids >= lo) & (ids < hi)] - lo
            if rows.size:
                working[b] = np.union1d(working[b], rows.astype(np.int64))

    def _inner(self, working: list[np.ndarray], budget: int | None = None) -> LpStatus:
        end = self.pivots + budget if budget is not None else None
        while True:
            if self.pivots >= self.max_pivots:
                return LpStatus.ITERATION_LIMIT
            if end is not None and self.pivots >= end:
                # hand control back so the outer loop can refresh duals,
                # prune and inject a new diverse batch; plateau churn inside
                # one working set otherwise starves the sweep
                return LpStatus.OPTIMAL
            u = self.duals()
            cand_ids, cand_rcs = self.all_candidates(u, working)
            if cand_ids is None:
                return LpStatus.OPTIMAL
            gid, w = self.pick_entering(cand_ids, cand_rcs)
            if gid in self.in_basis:
                # a basic column has reduced cost 0; pricing it negative
                # means the duals have drifted
                if self.fresh:
                    self.repair()
                else:
                    self.make_fresh()
                continue
            t = self.ratio_test(w)
            if t is None:
                if not self.fresh:
                    # drift can zero out the whole pivot column; retry exact
                    self.make_fresh()
                    continue
                raise RuntimeError(
                    "unbounded transport program: constraint rows bound every "
                    "column weight, so this indicates basis corruption"
                )
            if w[t] < STABLE_PIVOT and not self.fresh:
                self.make_fresh()
                continue
            self.pivot(gid, t, w)

    # -- extraction ----------------------------------------------------------

    def finish(self, status: LpStatus) -> LpSolution | None:
        x = np.maximum(self.x, 0.0)
        artificial_mass = float(x[self.basis >= self.art_base].sum())
        if artificial_mass > FEAS_TOL * self.n:
            return LpSolution(
                gamma={},
                dual=np.zeros(self.n),
                objective=float("inf"),
                status=LpStatus.INFEASIBLE,
                basis=(),
                n_pivots=self.pivots,
            )
        if self.n_slack and status is LpStatus.OPTIMAL:
            return self._finish_covering(x)
        gamma: dict[Configuration, float] = {}
        basis_configs: list[Configuration] = []
        objective = 0.0
        for t, gid in enumerate(self.basis):
            gid = int(gid)
            if gid >= self.n_real:
                continue
            r, c = self.rp.column(gid)
            basis_configs.append(r)
            if x[t] > 1e-12:
                gamma[r] = gamma.get(r, 0.0) + float(x[t])
                objective += c * float(x[t])
        return LpSolution(
            gamma=gamma,
            dual=self.duals(),
            objective=objective,
            status=status,
            basis=tuple(basis_configs),
            n_pivots=self.pivots,
        )

    def _finish_covering(self, x: np.ndarray) -> LpSolution | None:
        """Convert an optimal covering solution back to the equality form.

        Over-covered rows (positive surplus) push mass down through subset
        columns of equal cost; a small equality re-solve over the repaired
        support then yields a basic solution, certified by the covering
        duals (they are dual-feasible for the equality problem and share
        its optimal value).  Returns None when the pool turns out not to be
        subset-closed, so the caller can rerun in plain equality mode.
        """
        rp = self.rp
        gamma: dict[Configuration, float] = {}
        over = np.zeros(self.n)
        for t, gid in enumerate(self.basis):
            gid = int(gid)
            v = float(x[t])
            if gid >= self.art_base or v <= 1e-12:
                continue
            if gid >= self.n_real:
                over[gid - self.n_real] = v
            else:
                r, _ = rp.column(gid)
                gamma[r] = gamma.get(r, 0.0) + v
        for i in np.flatnonzero(over > 1e-12):
            need = float(over[i])
            for r in sorted(
                (r for r in gamma if i in r), key=gamma.get, reverse=True
            ):
                if need <= 1e-12:
                    break
                if len(r) == 1:
                    continue
                r2 = tuple(q for q in r if q != i)
                if rp.find_column(r2) < 0:
                    return None
                take = min(gamma[r], need)
                gamma[r] -= take
                if gamma[r] <= 1e-12:
                    del gamma[r]
                gamma[r2] = gamma.get(r2, 0.0) + take
                need -= take
            if need > 1e-12:
                return None
        u = self.duals()
        sing_present = {r[0] for r in gamma if len(r) == 1}
        cols = [(r, 1.0) for r in gamma]
        cols.extend(((i,), 1.0) for i in range(self.n) if i not in sing_present)
        small = ReducedProblem.from_columns(self.n, cols)
        sol = _simplex(small, warm_basis=None, max_pivots=50 * self.n + 20_000)
        if sol.status is not LpStatus.OPTIMAL:
            return None
        target = float(u @ rp.rhs)
        if abs(sol.objective - target) > 1e-7 * (1.0 + abs(target)):
            return None
        return LpSolution(
            gamma=sol.gamma,
            dual=u,
            objective=sol.objective,
            status=LpStatus.OPTIMAL,
            basis=sol.basis,
            n_pivots=self.pivots + sol.n_pivots,
        )


def _simplex(
    rp: ReducedProblem, warm_basis: np.ndarray | None, max_pivots: int | None
) -> LpSolution:
    if not np.all(rp.covered_points()):
        return LpSolution(
            gamma={},
            dual=np.zeros(rp.n_points),
            objective=float("inf"),
            status=LpStatus.INFEASIBLE,
            basis=(),
        )
    if max_pivots is None:
        max_pivots = 50 * rp.n_points + 20_000
    # Unit-cost problems large enough to sift are solved as covering
    # problems: the per-point equalities make near-integral vertices so
    # degenerate that the walk stalls, while with surplus columns the same
    # optimum (equal under subset-closure, which unit-cost enumeration
    # guarantees) is reached quickly.  _finish_covering converts back and
    # returns None if the pool was not closed after all.
    covering = rp.n_columns > SIFT_THRESHOLD and all(
        np.all(cost == 1.0) for _, _, cost in rp.blocks
    )
    sol = _run_simplex(rp, warm_basis, max_pivots, covering)
    if sol is None:
        sol = _run_simplex(rp, warm_basis, max_pivots, covering=False)
    return sol


def _run_simplex(
    rp: ReducedProblem,
    warm_basis: np.ndarray | None,
    max_pivots: int,
    covering: bool,
) -> LpSolution | None:
    core = _Simplex(rp, max_pivots, covering=covering)
    started_warm = False
    if warm_basis is not None:
        started_warm = core.set_basis(warm_basis)
        # a mapped basis can still be numerically unusable; check feasibility
        if started_warm and core.x.min() < -FEAS_TOL:
            started_warm = False
    if not started_warm:
        core.partition_start()

    if rp.n_columns <= SIFT_THRESHOLD:
        working = [np.arange(idx.shape[0], dtype=np.int64) for _, idx, _ in rp.blocks]
    else:
        # Sifting start: all singletons plus whatever the basis references.
        working = [np.empty(0, dtype=np.int64) for _ in rp.blocks]
        for b, (m, idx, _) in enumerate(rp.blocks):
            if m == 1:
                working[b] = np.arange(idx.shape[0], dtype=np.int64)
        core._augment(
            working,
            np.array([g for g in core.basis if g < core.n_real], dtype=np.int64),
        )
    status = core.run(working)
    if status is LpStatus.OPTIMAL:
        # the run optimized a perturbed rhs; restore the exact one.  The
        # basis stays dual-feasible (duals ignore the rhs), and for a small
        # enough perturbation it is primal-feasible too, so shrink and
        # re-solve on the rare miss.
        scale = PERTURB_SCALE
        while True:
            core.rhs = rp.rhs.copy()
            core.make_fresh()
            core.x = core.binv @ core.rhs
            if core.x.min() >= -FEAS_TOL or scale <= 1e-16:
                break
            scale /= 1024.0
            core.rhs = rp.rhs * (1.0 + scale * _perturbation(core.n))
            core.identity_start()
            status = core.run(working)
            if status is not LpStatus.OPTIMAL:
                break
    return core.finish(status)
