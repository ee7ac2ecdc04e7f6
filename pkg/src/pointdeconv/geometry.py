"""Non-learned spatial and feature-space kernels.

Pure numpy: Gaussian feature similarity, k-NN graphs, farthest point
sampling, neighborhood mean/covariance statistics, the statistics-level
Chamfer distances, point-set Chamfer distance and exact EMD.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    pass


@dataclass
class NeighborGraph:
    k: int
    indices: np.ndarray      # (N, k) neighbor ids, rows sorted by descending similarity
    similarities: np.ndarray  # (N, k) values in (0, 1]


@dataclass
class NeighborhoodStats:
    centroid: int
    mean: np.ndarray        # (3,)
    cov: np.ndarray         # (3, 3)


@dataclass
class CentroidSet:
    label: int
    stats: list = field(default_factory=list)

    def means(self) -> np.ndarray:
        return np.stack([s.mean for s in self.stats])

    def covs(self) -> np.ndarray:
        return np.stack([s.cov for s in self.stats])


# --------------------------------------------------------------- similarity
def similarity(x_i: np.ndarray, x_j: np.ndarray, beta: float = 1.0) -> float:
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise GeometryError(f"feature dimension mismatch: {x_i.shape} vs {x_j.shape}")
    d2 = np.sum((x_i - x_j) ** 2)
    return float(np.exp(-beta * d2))


def pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared L2 distances between rows of `a` and rows of `b`."""
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def knn_graph(features: np.ndarray, k: int, beta: float = 1.0) -> NeighborGraph:
    """k most similar other points per point under the Gaussian similarity.

    Ties break toward the lower index; rows come out sorted by descending
    similarity (ascending distance).
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if not (1 <= k < n):
        raise GeometryError(f"need 1 <= k < N, got k={k}, N={n}")
    d2 = pairwise_sqdist(features, features)
    np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    sims = np.exp(-beta * np.take_along_axis(d2, order, axis=1))
    return NeighborGraph(k=k, indices=order, similarities=sims)


# ---------------------------------------------------------------------- FPS
def fps(points: np.ndarray, m: int, seed_index: int = 0) -> np.ndarray:
    """Greedy max-min farthest point sampling; returns m distinct indices."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if not (1 <= m <= n):
        raise GeometryError(f"need 1 <= m <= N, got m={m}, N={n}")
    if not (0 <= seed_index < n):
        raise GeometryError(f"seed index {seed_index} out of range")
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = seed_index
    mind = np.sum((points - points[seed_index]) ** 2, axis=1)
    mind[seed_index] = -np.inf   # keep indices distinct even with duplicates
    for s in range(1, m):
        nxt = int(np.argmax(mind))
        chosen[s] = nxt
        mind = np.minimum(mind, np.sum((points - points[nxt]) ** 2, axis=1))
        mind[nxt] = -np.inf
    return chosen


# ------------------------------------------------------- neighborhood stats
def spatial_knn_indices(points: np.ndarray, centroid_indices, k: int) -> np.ndarray:
    """Per centroid, indices of its k spatially nearest points (self included)."""
    points = np.asarray(points, dtype=np.float64)
    centroid_indices = np.asarray(centroid_indices, dtype=np.int64)
    n = points.shape[0]
    if k < 2:
        raise GeometryError("neighborhood size k must be >= 2")
    if k > n:
        raise GeometryError(f"k={k} exceeds cloud size N={n}")
    d2 = pairwise_sqdist(points[centroid_indices], points)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def neighborhood_stats(points: np.ndarray, centroid_indices, k: int) -> CentroidSet:
    """Mean and covariance (k-1 denominator) of each centroid's k-neighborhood."""
    points = np.asarray(points, dtype=np.float64)
    neigh = spatial_knn_indices(points, centroid_indices, k)
    out = CentroidSet(label=0)
    for ci, row in zip(np.asarray(centroid_indices, dtype=np.int64), neigh):
        local = points[row]
        mu = local.mean(axis=0)
        centered = local - mu
        cov = centered.T @ centered / (k - 1)
        out.stats.append(NeighborhoodStats(centroid=int(ci), mean=mu, cov=cov))
    return out


# -------------------------------------------------- statistics-level Chamfer
def _chamfer_max_directed(da: np.ndarray) -> float:
    return max(float(da.min(axis=1).mean()), float(da.min(axis=0).mean()))


def stats_chamfer_mean(s_a: CentroidSet, s_b: CentroidSet) -> float:
    """Max of the two directed average nearest-neighbor L2 distances over means."""
    if not s_a.stats or not s_b.stats:
        raise GeometryError("empty centroid set")
    d = np.sqrt(pairwise_sqdist(s_a.means(), s_b.means()))
    return _chamfer_max_directed(d)


def stats_chamfer_cov(s_a: CentroidSet, s_b: CentroidSet) -> float:
    """As the mean variant but over covariances under the Frobenius norm."""
    if not s_a.stats or not s_b.stats:
        raise GeometryError("empty centroid set")
    ca = s_a.covs().reshape(len(s_a.stats), -1)
    cb = s_b.covs().reshape(len(s_b.stats), -1)
    d = np.sqrt(pairwise_sqdist(ca, cb))
    return _chamfer_max_directed(d)


# ------------------------------------------------------------------ Chamfer
def chamfer_distance(a: np.ndarray, b: np.ndarray, squared: bool = True) -> float:
    """Symmetric sum of average nearest-neighbor distances between two clouds."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise GeometryError("chamfer distance of an empty cloud")
    d2 = pairwise_sqdist(a, b)
    if not squared:
        d2 = np.sqrt(d2)
    return float(d2.min(axis=1).mean() + d2.min(axis=0).mean())


# ---------------------------------------------------------------------- EMD
def _assignment_enumerate(cost: np.ndarray) -> np.ndarray:
    n = cost.shape[0]
    best_cost = np.inf
    best = None
    for perm in itertools.permutations(range(n)):
        c = cost[np.arange(n), perm].sum()
        if c < best_cost:
            best_cost = c
            best = perm
    return np.asarray(best, dtype=np.int64)


def _assignment_exact(cost: np.ndarray) -> np.ndarray:
    """Shortest-augmenting-path exact solver for the square assignment problem.

    Returns col[i]: the column matched to row i.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)   # p[j]: row assigned to column j (1-based)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col[p[j] - 1] = j - 1
    return col


def _assignment_auction(cost: np.ndarray, eps: float) -> np.ndarray:
    """Forward auction; eps-approximate for large problems."""
    n = cost.shape[0]
    value = -cost
    prices = np.zeros(n)
    row_of_col = np.full(n, -1, dtype=np.int64)
    col_of_row = np.full(n, -1, dtype=np.int64)
    unassigned = list(range(n))
    while unassigned:
        i = unassigned.pop()
        gains = value[i] - prices
        best = int(np.argmax(gains))
        best_gain = gains[best]
        gains[best] = -np.inf
        second_gain = gains.max() if n > 1 else best_gain
        prices[best] += best_gain - second_gain + eps
        prev = row_of_col[best]
        if prev >= 0:
            col_of_row[prev] = -1
            unassigned.append(prev)
        row_of_col[best] = i
        col_of_row[i] = best
    return col_of_row


def emd(a: np.ndarray, b: np.ndarray, method: str = "auto",
        squared: bool = False, exact_limit: int = 512) -> float:
    """Minimum mean per-point transport cost over bijections between a and b.

    method: "auto" picks the exact solver up to `exact_limit` points and an
    eps-approximate auction beyond; "exact", "enumerate" and "auction" force
    a path ("enumerate" is the factorial oracle, n <= 6).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryError(f"EMD needs equal-size clouds, got {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n == 0:
        raise GeometryError("EMD of an empty cloud")
    cost = pairwise_sqdist(a, b)
    if not squared:
        cost = np.sqrt(cost)
    if method == "auto":
        method = "exact" if n <= exact_limit else "auction"
    if method == "enumerate":
        if n > 6:
            raise GeometryError("enumeration oracle limited to n <= 6")
        col = _assignment_enumerate(cost)
    elif method == "exact":
        col = _assignment_exact(cost)
    elif method == "auction":
        off = np.triu_indices(n, k=1)
        med = float(np.median(cost[off])) if off[0].size else 1.0
        col = _assignment_auction(cost, eps=1e-3 * max(med, 1e-12))
    else:
        raise GeometryError(f"unknown EMD method '{method}'")
    return float(cost[np.arange(n), col].mean())


def emd_assignment(a: np.ndarray, b: np.ndarray, squared: bool = False) -> np.ndarray:
    """Optimal bijection a[i] -> b[col[i]] from the exact solver."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise GeometryError(f"EMD needs equal-size clouds, got {a.shape} vs {b.shape}")
    cost = pairwise_sqdist(a, b)
    if not squared:
        cost = np.sqrt(cost)
    return _assignment_exact(cost)
