"""Metric kernels: distances, smallest enclosing balls, Fréchet means, spread penalties.

Everything downstream (feasibility tests, transport costs) reduces to the
primitives in this module, so they are kept free of solver state: pure
functions over float64 arrays, safe to call from any worker.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Metric",
    "Ball",
    "distance",
    "enclosing_ball",
    "frechet_mean",
    "w2_penalty",
    "tol_contain",
    "within_budget",
    "WELZL_MAX_DIM",
    "REL_TOL_RADIUS",
]

# Exact Welzl recursion is used up to this dimension; beyond it the
# Frank-Wolfe scheme takes over (support solves degrade numerically and
# the recursion depth grows with d+1 support points).
WELZL_MAX_DIM = 16

# Relative radius tolerance guaranteed by the iterative (high-dimensional)
# Euclidean path.  The Welzl path is exact up to float arithmetic.
REL_TOL_RADIUS = 1e-6


class Metric(enum.Enum):
    """Ground metric on feature space: L2 or L-infinity on R^d."""

    EUCLIDEAN = "l2"
    CHEBYSHEV = "linf"

    @classmethod
    def parse(cls, name: str) -> "Metric":
        """Map a CLI-style name ("l2" / "linf") to a Metric member."""
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown metric {name!r}: expected one of "
                f"{[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class Ball:
    """Closed ball given by center point and nonnegative radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=np.float64)
        if center.ndim != 1:
            raise ValueError("ball center must be a 1-d point")
        if not np.isfinite(self.radius) or self.radius < 0.0:
            raise ValueError(f"ball radius must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    def contains(self, point: np.ndarray, metric: Metric) -> bool:
        """Membership up to the standard containment slack."""
        return distance(point, self.center, metric) <= self.radius + tol_contain(self.radius)


def tol_contain(radius: float) -> float:
    """Floating-point slack for containment checks: 1e-9 * (1 + radius)."""
    return 1e-9 * (1.0 + radius)


def within_budget(radius: float, eps: float) -> bool:
    """Feasibility test radius <= eps, with slack so boundary configurations
    are not rejected to float noise."""
    return radius <= eps + 1e-9 * (1.0 + eps)


def distance(a: np.ndarray, b: np.ndarray, metric: Metric) -> float:
    """Ground distance between two points."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    if metric is Metric.EUCLIDEAN:
        return float(np.linalg.norm(diff))
    return float(np.max(np.abs(diff))) if diff.size else 0.0


def _as_point_matrix(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("empty point set")
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2:
        raise ValueError("points must form an (n, d) array")
    return pts


def enclosing_ball(points, metric: Metric) -> Ball:
    """Smallest enclosing ball of a nonempty point set.

    Chebyshev balls are axis-aligned cubes, so the optimum is the bounding-box
    midpoint with radius half the largest coordinate span.  The Euclidean case
    uses Welzl's move-to-front recursion for d <= WELZL_MAX_DIM (exact), and a
    Frank-Wolfe iteration with away steps on the dual weight simplex above
    that, stopping once the radius is within REL_TOL_RADIUS of optimal.  In
    all cases the returned radius is the exact maximum distance from the
    chosen center, so containment of the inputs holds by construction.
    """
    pts = _as_point_matrix(points)
    if metric is Metric.CHEBYSHEV:
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        center = 0.5 * (lo + hi)
        radius = 0.5 * float(np.max(hi - lo)) if pts.shape[1] else 0.0
        return Ball(center, radius)

    n, d = pts.shape
    if n <= 3:
        center = _mb_small(pts)
    elif d <= WELZL_MAX_DIM:
        center = _welzl_center(pts)
    else:
        center = _frank_wolfe_center(pts)
    radius = float(np.sqrt(np.max(_sq_dists(pts, center))))
    return Ball(center, radius)


def frechet_mean(points, metric: Metric = Metric.EUCLIDEAN) -> np.ndarray:
    """Barycenter of a point set; defined here for the Euclidean metric only
    (the L-infinity barycenter is nonunique, so it is not guessed at)."""
    if metric is not Metric.EUCLIDEAN:
        raise ValueError(f"Fréchet mean is only defined for the Euclidean metric, got {metric}")
    pts = _as_point_matrix(points)
    return pts.mean(axis=0)


def w2_penalty(points, tau: float) -> float:
    """Spread penalty (1/tau^2) * sum_i d(x_i, mean)^2 (Euclidean)."""
    if not tau > 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    pts = _as_point_matrix(points)
    mean = pts.mean(axis=0)
    return float(np.sum(_sq_dists(pts, mean))) / (tau * tau)


def _sq_dists(pts: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = pts - center
    return np.einsum("ij,ij->i", diff, diff)


# --- Euclidean miniball: small closed forms -------------------------------


def _circumcenter(support: np.ndarray) -> np.ndarray | None:
    """Center equidistant from all support points, within their affine hull.

    Solves 2 (S_i - S_0) . (S_j - S_0) lam = |S_i - S_0|^2 and returns
    S_0 + lam @ (S - S_0), or None when the support is affinely degenerate.
    """
    base = support[0]
    rel = support[1:] - base
    if rel.shape[0] == 0:
        return base.copy()
    gram = 2.0 * rel @ rel.T
    rhs = np.einsum("ij,ij->i", rel, rel)
    try:
        lam = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(lam)):
        return None
    return base + lam @ rel


def _mb_small(pts: np.ndarray) -> np.ndarray:
    """Exact miniball center for up to three points, any dimension."""
    n = pts.shape[0]
    if n == 1:
        return pts[0].copy()
    if n == 2:
        return 0.5 * (pts[0] + pts[1])
    # Three points: the miniball is either a diameter ball of some pair or
    # the circumscribed ball of the triangle, whichever is smallest while
    # containing all three.
    best_center = None
    best_sq = np.inf
    for i in range(3):
        for j in range(i + 1, 3):
            c = 0.5 * (pts[i] + pts[j])
            sq = _sq_dists(pts, c)
            r_sq = 0.25 * np.sum((pts[i] - pts[j]) ** 2)
            if np.max(sq) <= r_sq * (1.0 + 1e-12) + 1e-30 and r_sq < best_sq:
                best_center, best_sq = c, r_sq
    if best_center is not None:
        return best_center
    c = _circumcenter(pts)
    if c is None:
        # Collinear triple: fall back to the bounding pair.
        dists = [(np.sum((pts[i] - pts[j]) ** 2), i, j) for i in range(3) for j in range(i + 1, 3)]
        _, i, j = max(dists)
        return 0.5 * (pts[i] + pts[j])
    return c


# --- Euclidean miniball: Welzl move-to-front (d <= WELZL_MAX_DIM) ---------


def _welzl_center(pts: np.ndarray) -> np.ndarray:
    d = pts.shape[1]
    order = list(range(pts.shape[0]))
    center, _ = _welzl_mtf(pts, order, len(order), [], d)
    if center is None:
        center = pts[0].copy()
    return center


def _welzl_mtf(pts, order, count, support, d):
    """Move-to-front Welzl recursion.

    order[:count] are the points still to be processed; support holds indices
    of points forced onto the boundary.  Returns (center, squared radius).
    """
    center, r_sq = _support_ball(pts, support)
    if len(support) == d + 1:
        return center, r_sq
    i = 0
    while i < count:
        p = order[i]
        inside = False
        if center is not None:
            diff = pts[p] - center
            inside = diff @ diff <= r_sq * (1.0 + 1e-10) + 1e-30
        if not inside:
            center, r_sq = _welzl_mtf(pts, order, i, support + [p], d)
            # Move-to-front keeps hard points early, flattening recursion.
            order.insert(0, order.pop(i))
        i += 1
    return center, r_sq


def _support_ball(pts, support):
    if not support:
        return None, -1.0
    sup = pts[support]
    if len(support) == 1:
        return sup[0].copy(), 0.0
    center = _circumcenter(sup)
    if center is None:
        # Degenerate support (affinely dependent); recompute with the
        # minimum-norm solution so the recursion can continue.
        base = sup[0]
        rel = sup[1:] - base
        rhs = np.einsum("ij,ij->i", rel, rel)
        lam, *_ = np.linalg.lstsq(2.0 * rel @ rel.T, rhs, rcond=None)
        center = base + lam @ rel
    diff = sup[0] - center
    return center, float(diff @ diff)


# --- Euclidean miniball: Frank-Wolfe with away steps (high dimension) -----


def _frank_wolfe_center(pts: np.ndarray) -> np.ndarray:
    """Miniball center via the dual QP max_lam sum lam_i |x_i|^2 - |X^T lam|^2
    over the weight simplex; the optimal center is the lam-barycenter.

    Away steps give the support sparsity needed for fast convergence; the
    loop stops when the farthest-point radius (upper bound) is within
    REL_TOL_RADIUS of sqrt(phi(lam)) (lower bound).
    """
    n, _ = pts.shape
    lam = np.zeros(n)
    # Start from a rough diameter pair: farthest point from the centroid,
    # then the farthest point from that one.
    centroid = pts.mean(axis=0)
    a = int(np.argmax(_sq_dists(pts, centroid)))
    b = int(np.argmax(_sq_dists(pts, pts[a])))
    if a == b:
        return pts[a].copy()
    lam[a] = lam[b] = 0.5
    center = lam @ pts

    max_iter = 200 * min(n, 64) + 2000
    for _ in range(max_iter):
        g = _sq_dists(pts, center)
        phi = float(lam @ g)
        t = int(np.argmax(g))
        if g[t] <= phi * (1.0 + REL_TOL_RADIUS) ** 2:
            break
        active = np.flatnonzero(lam > 0.0)
        away = int(active[np.argmin(g[active])])
        fw_gap = g[t] - phi
        away_gap = phi - g[away]
        if fw_gap >= away_gap or len(active) == 1:
            # Forward step toward the farthest point.
            gamma = fw_gap / (2.0 * g[t]) if g[t] > 0.0 else 0.0
            gamma = min(max(gamma, 0.0), 1.0)
            lam *= 1.0 - gamma
            lam[t] += gamma
            center += gamma * (pts[t] - center)
        else:
            # Away step lam <- (1+gamma) lam - gamma e_away; at gamma_max the
            # away point drops out of the support entirely.
            gamma_max = lam[away] / (1.0 - lam[away]) if lam[away] < 1.0 else 0.0
            gamma = away_gap / (2.0 * g[away]) if g[away] > 0.0 else gamma_max
            gamma = min(max(gamma, 0.0), gamma_max)
            lam *= 1.0 + gamma
            lam[away] = max(lam[away] - gamma, 0.0)
            center += gamma * (center - pts[away])
    return center
