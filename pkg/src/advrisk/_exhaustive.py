"""Level-wise enumeration of all budget-feasible configurations.

Enumeration extends each length-k configuration only by points with a higher
index than its largest member, so every feasible set is produced exactly
once; completeness follows because any prefix (in index order) of a feasible
configuration is itself feasible (subsets fit the same ball).

Candidate generation is the workhorse: the admissible extensions of r are
the intersection of the neighbor sets of its members (points within 2*eps
and of a different label), restricted to indices above max(r).  Neighbor
sets are kept as uint64 bitsets, so the intersection costs a few dozen word
operations per configuration.  Surviving candidates get an exact smallest-
enclosing-ball test.  The 2-d Euclidean and Chebyshev paths run as compiled
kernels; other metrics and dimensions fall back to a vectorized numpy path.
"""

from __future__ import annotations

import numpy as np

from advrisk.data import LabeledDataset
from advrisk.geometry import Metric, enclosing_ball

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - sandbox always has numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


class EnumerationCapExceeded(RuntimeError):
    """Raised when enumeration would exceed the configured hard cap."""


CHUNK_PARENTS = 1 << 18


def neighbor_bitsets(ds: LabeledDataset, metric: Metric, eps: float) -> np.ndarray:
    """(N, W) uint64 bitsets: bit q of row p set iff p and q could share a
    feasible pair, i.e. different labels and distance <= 2*eps (+ slack)."""
    x = ds.features
    n = ds.n_points
    cut = 2.0 * eps + 1e-9 * (1.0 + 2.0 * eps)
    close = np.zeros((n, n), dtype=bool)
    # chunk the distance matrix; N=10^4 would need 800MB at float64 otherwise
    step = max(1, (1 << 24) // max(1, n * ds.n_features))
    for lo in range(0, n, step):
        hi = min(lo + step, n)
        diff = x[lo:hi, None, :] - x[None, :, :]
        if metric is Metric.EUCLIDEAN:
            dist = np.sqrt((diff * diff).sum(axis=2))
        else:
            dist = np.abs(diff).max(axis=2)
        close[lo:hi] = dist <= cut
    close &= ds.labels[:, None] != ds.labels[None, :]
    w = (n + 63) >> 6
    bits = np.zeros((n, w), dtype=np.uint64)
    rows, cols = np.nonzero(close)
    np.bitwise_or.at(bits, (rows, cols >> 6), np.uint64(1) << (cols & 63).astype(np.uint64))
    return bits


def _eps_eff(eps: float) -> float:
    return eps + 1e-9 * (1.0 + eps)


# --- compiled 2-d kernels ---------------------------------------------------


@njit(cache=True)
def _popcount(v):
    v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
    v = (v & np.uint64(0x3333333333333333)) + ((v >> np.uint64(2)) & np.uint64(0x3333333333333333))
    v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (v * np.uint64(0x0101010101010101)) >> np.uint64(56)


@njit(cache=True)
def _count_candidates(nb, configs):
    n, k = configs.shape
    w = nb.shape[1]
    total = 0
    for i in range(n):
        last = configs[i, k - 1]
        lw = last >> 6
        lbit = last & 63
        for wi in range(lw, w):
            word = nb[configs[i, 0], wi]
            for j in range(1, k):
                word &= nb[configs[i, j], wi]
            if wi == lw:
                if lbit == 63:
                    word = np.uint64(0)
                else:
                    word &= ~((np.uint64(1) << np.uint64(lbit + 1)) - np.uint64(1))
            total += _popcount(word)
    return total


@njit(cache=True)
def _extend_euclid2(xs, ys, nb, configs, balls, eps_eff,
                    out_idx, out_balls):
    """Extend each parent by all feasible candidates; returns rows written.

    balls: (n, 3) = center x, center y, radius of the parent's miniball.
    A candidate inside the parent ball keeps it; otherwise the child ball is
    the smallest ball with the candidate on its boundary, found among
    candidate-point pairs and candidate-pair circumcircles.
    """
    n, k = configs.shape
    w = nb.shape[1]
    count = 0
    px = np.empty(k, np.float64)
    py = np.empty(k, np.float64)
    for i in range(n):
        last = configs[i, k - 1]
        lw = last >> 6
        lbit = last & 63
        for j in range(k):
            px[j] = xs[configs[i, j]]
            py[j] = ys[configs[i, j]]
        cx = balls[i, 0]
        cy = balls[i, 1]
        cr = balls[i, 2]
        cr2_in = (cr * (1.0 + 1e-12) + 1e-15) ** 2
        for wi in range(lw, w):
            word = nb[configs[i, 0], wi]
            for j in range(1, k):
                word &= nb[configs[i, j], wi]
            if wi == lw:
                if lbit == 63:
                    word = np.uint64(0)
                else:
                    word &= ~((np.uint64(1) << np.uint64(lbit + 1)) - np.uint64(1))
            base = wi << 6
            while word != np.uint64(0):
                low = word & (~word + np.uint64(1))
                q = base + int(_popcount(low - np.uint64(1)))
                word ^= low
                qx = xs[q]
                qy = ys[q]
                dx = qx - cx
                dy = qy - cy
                if dx * dx + dy * dy <= cr2_in:
                    # candidate already inside the parent ball
                    out_idx[count, :k] = configs[i]
                    out_idx[count, k] = q
                    out_balls[count, 0] = cx
                    out_balls[count, 1] = cy
                    out_balls[count, 2] = cr
                    count += 1
                    continue
                # smallest ball with q on the boundary
                best_r2 = np.inf
                best_x = 0.0
                best_y = 0.0
                for a in range(k):
                    mx = 0.5 * (qx + px[a])
                    my = 0.5 * (qy + py[a])
                    ddx = qx - mx
                    ddy = qy - my
                    r2 = ddx * ddx + ddy * ddy
                    if r2 >= best_r2:
                        continue
                    ok = True
                    lim = r2 * (1.0 + 4e-12) + 1e-18
                    for b in range(k):
                        ex = px[b] - mx
                        ey = py[b] - my
                        if ex * ex + ey * ey > lim:
                            ok = False
                            break
                    if ok:
                        best_r2 = r2
                        best_x = mx
                        best_y = my
                for a in range(k):
                    ax = px[a] - qx
                    ay = py[a] - qy
                    for b in range(a + 1, k):
                        bx = px[b] - qx
                        by = py[b] - qy
                        den = 2.0 * (ax * by - ay * bx)
                        if den == 0.0:
                            continue
                        na = ax * ax + ay * ay
                        nbb = bx * bx + by * by
                        ux = (by * na - ay * nbb) / den
                        uy = (ax * nbb - bx * na) / den
                        r2 = ux * ux + uy * uy
                        if r2 >= best_r2:
                            continue
                        mx = qx + ux
                        my = qy + uy
                        ok = True
                        lim = r2 * (1.0 + 4e-12) + 1e-18
                        for t in range(k):
                            ex = px[t] - mx
                            ey = py[t] - my
                            if ex * ex + ey * ey > lim:
                                ok = False
                                break
                        if ok:
                            best_r2 = r2
                            best_x = mx
                            best_y = my
                if best_r2 == np.inf:
                    continue
                radius = np.sqrt(best_r2)
                if radius <= eps_eff:
                    out_idx[count, :k] = configs[i]
                    out_idx[count, k] = q
                    out_balls[count, 0] = best_x
                    out_balls[count, 1] = best_y
                    out_balls[count, 2] = radius
                    count += 1
    return count


@njit(cache=True)
def _extend_cheby2(xs, ys, nb, configs, boxes, eps_eff, out_idx, out_boxes):
    """Chebyshev counterpart; state is the bounding box (minx,maxx,miny,maxy)."""
    n, k = configs.shape
    w = nb.shape[1]
    count = 0
    for i in range(n):
        last = configs[i, k - 1]
        lw = last >> 6
        lbit = last & 63
        minx = boxes[i, 0]
        maxx = boxes[i, 1]
        miny = boxes[i, 2]
        maxy = boxes[i, 3]
        for wi in range(lw, w):
            word = nb[configs[i, 0], wi]
            for j in range(1, k):
                word &= nb[configs[i, j], wi]
            if wi == lw:
                if lbit == 63:
                    word = np.uint64(0)
                else:
                    word &= ~((np.uint64(1) << np.uint64(lbit + 1)) - np.uint64(1))
            base = wi << 6
            while word != np.uint64(0):
                low = word & (~word + np.uint64(1))
                q = base + int(_popcount(low - np.uint64(1)))
                word ^= low
                nminx = min(minx, xs[q])
                nmaxx = max(maxx, xs[q])
                nminy = min(miny, ys[q])
                nmaxy = max(maxy, ys[q])
                span = max(nmaxx - nminx, nmaxy - nminy)
                if 0.5 * span <= eps_eff:
                    out_idx[count, :k] = configs[i]
                    out_idx[count, k] = q
                    out_boxes[count, 0] = nminx
                    out_boxes[count, 1] = nmaxx
                    out_boxes[count, 2] = nminy
                    out_boxes[count, 3] = nmaxy
                    count += 1
    return count


# --- generic fallback --------------------------------------------------------


def _extend_generic(ds, metric, nb, configs, eps_eff):
    """Any-dimension extension: bitset candidates, exact ball per candidate."""
    n, k = configs.shape
    w = nb.shape[1]
    feats = ds.features
    out_rows = []
    for i in range(n):
        mask = nb[configs[i, 0]].copy()
        for j in range(1, k):
            mask &= nb[configs[i, j]]
        last = int(configs[i, k - 1])
        lw = last >> 6
        if (last & 63) == 63:
            mask[lw] = 0
        else:
            mask[lw] &= ~np.uint64((np.uint64(1) << np.uint64((last & 63) + 1)) - np.uint64(1))
        mask[:lw] = 0
        cand = np.flatnonzero(
            np.unpackbits(mask.view(np.uint8), bitorder="little")
        )
        if cand.size == 0:
            continue
        parent_pts = feats[configs[i]]
        for q in cand:
            pts = np.vstack([parent_pts, feats[q]])
            if enclosing_ball(pts, metric).radius <= eps_eff:
                out_rows.append(np.append(configs[i], np.int32(q)))
    if not out_rows:
        return np.empty((0, k + 1), dtype=np.int32)
    return np.array(out_rows, dtype=np.int32)


# --- driver -------------------------------------------------------------------


def enumerate_blocks(
    ds: LabeledDataset,
    metric: Metric,
    eps: float,
    max_configs: int | None = None,
) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """All feasible configurations with radius <= eps, grouped by length.

    Returns [(m, indices, costs=1.0), ...]; indices rows are lexicographically
    ordered and duplicate-free.  Raises EnumerationCapExceeded when the total
    would pass max_configs.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    n = ds.n_points
    total = n
    if max_configs is not None and total > max_configs:
        raise EnumerationCapExceeded(
            f"enumeration cap {max_configs} below singleton count {n}"
        )
    nb = neighbor_bitsets(ds, metric, eps)
    blocks = [(1, np.arange(n, dtype=np.int32).reshape(n, 1), np.ones(n))]
    eps_eff = _eps_eff(eps)
    use_fast = HAVE_NUMBA and ds.n_features == 2
    xs = np.ascontiguousarray(ds.features[:, 0])
    ys = np.ascontiguousarray(ds.features[:, 1]) if ds.n_features >= 2 else np.zeros(n)

    configs = blocks[0][1]
    state = None
    if use_fast:
        if metric is Metric.EUCLIDEAN:
            state = np.column_stack([xs, ys, np.zeros(n)])
        else:
            state = np.column_stack([xs, xs, ys, ys])

    k = 1
    while configs.shape[0] > 0 and k < ds.n_classes:
        child_idx_parts = []
        child_state_parts = []
        level_count = 0
        for lo in range(0, configs.shape[0], CHUNK_PARENTS):
            hi = min(lo + CHUNK_PARENTS, configs.shape[0])
            par = configs[lo:hi]
            if use_fast:
                budget = int(_count_candidates(nb, par))
                if budget == 0:
                    continue
                out_idx = np.empty((budget, k + 1), dtype=np.int32)
                if metric is Metric.EUCLIDEAN:
                    out_state = np.empty((budget, 3))
                    wrote = _extend_euclid2(
                        xs, ys, nb, par, state[lo:hi], eps_eff, out_idx, out_state
                    )
                else:
                    out_state = np.empty((budget, 4))
                    wrote = _extend_cheby2(
                        xs, ys, nb, par, state[lo:hi], eps_eff, out_idx, out_state
                    )
                if wrote:
                    child_idx_parts.append(out_idx[:wrote].copy())
                    child_state_parts.append(out_state[:wrote].copy())
                    level_count += wrote
            else:
                rows = _extend_generic(ds, metric, nb, par, eps_eff)
                if rows.shape[0]:
                    child_idx_parts.append(rows)
                    level_count += rows.shape[0]
            # abort mid-level: a single level can dwarf the cap
            if max_configs is not None and total + level_count > max_configs:
                raise EnumerationCapExceeded(
                    f"enumeration passed the cap of {max_configs} configurations "
                    f"at length {k + 1} ({total + level_count} found so far)"
                )
        if not child_idx_parts:
            break
        configs = (
            child_idx_parts[0]
            if len(child_idx_parts) == 1
            else np.concatenate(child_idx_parts)
        )
        del child_idx_parts
        if use_fast:
            state = (
                child_state_parts[0]
                if len(child_state_parts) == 1
                else np.concatenate(child_state_parts)
            )
            del child_state_parts
        k += 1
        total += configs.shape[0]
        blocks.append((k, configs, np.ones(configs.shape[0])))
    return blocks
