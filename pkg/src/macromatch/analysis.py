"""Clustering metrics, retrieval, pairwise distances and UPGMA trees."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

METRICS = ("euclidean", "cosine")


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    inertia_history: tuple = field(default=(), repr=False)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    entries: np.ndarray

    def __post_init__(self):
        d = np.array(self.entries, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if np.isnan(d).any():
            raise ValueError("distance matrix contains NaN")
        if not np.allclose(d, d.T, atol=1e-9, rtol=0):
            raise ValueError("distance matrix must be symmetric")
        if (d < 0).any() or np.any(np.diag(d) != 0):
            raise ValueError("distances must be non-negative with zero diagonal")
        d.setflags(write=False)
        object.__setattr__(self, "entries", d)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("points must be a non-empty 2-D array")
    return x


def _sq_dists(x, c):
    d = (x * x).sum(1)[:, None] - 2 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x, k, rng):
    centers = [x[rng.integers(len(x))]]
    d2 = _sq_dists(x, np.array(centers)).min(1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(len(x), p=d2 / total) if total > 0 else rng.integers(len(x))
        centers.append(x[idx])
        d2 = np.minimum(d2, _sq_dists(x, x[idx][None]).ravel())
    return np.array(centers)


def _lloyd(x, centers, max_iter):
    k = len(centers)
    labels = _sq_dists(x, centers).argmin(1)
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(k):
            if not np.any(labels == j):
                # reseed an empty cluster on the point farthest from its centroid
                far = _sq_dists(x, centers)[np.arange(len(x)), labels].argmax()
                labels[far] = j
        centers = np.array([x[labels == j].mean(0) for j in range(k)])
        d = _sq_dists(x, centers)
        history.append(float(d[np.arange(len(x)), labels].sum()))
        new = d.argmin(1)
        if np.array_equal(new, labels):
            break
        labels = new
    inertia = float(_sq_dists(x, centers)[np.arange(len(x)), labels].sum())
    return labels, centers, inertia, it, tuple(history)


def kmeans(points, k: int, seed: int = 0, max_iter: int = 300,
           restarts: int = 5) -> ClusterAssignment:
    """k-means++ seeding plus Lloyd iterations; best inertia over ``restarts``."""
    x = _as_points(points)
    if not 1 <= k <= len(x):
        raise ValueError(f"k={k} must lie in [1, {len(x)}]")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        run = _lloyd(x, _kmeans_pp(x, k, rng), max_iter)
        if best is None or run[2] < best[2]:
            best = run
    labels, centers, inertia, it, hist = best
    return ClusterAssignment(labels, centers, inertia, it, hist)


def _pair_dists(x):
    return squareform(pdist(x))


@dataclass(frozen=True, eq=False)
class Silhouette:
    values: np.ndarray
    mean: float
    cluster_means: np.ndarray
    std_across_clusters: float


def silhouette(points, labels) -> Silhouette:
    """Per-point silhouette with Euclidean distance; singletons score 0."""
    x = _as_points(points)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    d = _pair_dists(x)
    np.fill_diagonal(d, 0.0)
    member = labels[None, :] == uniq[:, None]
    sizes = member.sum(1)
    # mean distance from each point to each cluster
    sums = d @ member.T.astype(float)
    own = np.searchsorted(uniq, labels)
    s = np.zeros(len(x))
    for i in range(len(x)):
        n_own = sizes[own[i]]
        if n_own == 1:
            continue
        a = sums[i, own[i]] / (n_own - 1)
        others = np.delete(sums[i] / sizes, own[i])
        b = others.min()
        denom = max(a, b)
        s[i] = (b - a) / denom if denom > 0 else 0.0
    cluster_means = np.array([s[own == j].mean() for j in range(uniq.size)])
    return Silhouette(s, float(s.mean()), cluster_means, float(cluster_means.std()))


def davies_bouldin(points, labels) -> float:
    x = _as_points(points)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2:
        raise ValueError("Davies-Bouldin needs at least two clusters")
    cents = np.array([x[labels == c].mean(0) for c in uniq])
    scatter = np.array([np.linalg.norm(x[labels == c] - cents[i], axis=1).mean()
                        for i, c in enumerate(uniq)])
    sep = cdist(cents, cents)
    worst = np.zeros(uniq.size)
    for i in range(uniq.size):
        for j in range(uniq.size):
            if i == j:
                continue
            if sep[i, j] == 0:
                raise ValueError(f"clusters {uniq[i]} and {uniq[j]} share a centroid")
            worst[i] = max(worst[i], (scatter[i] + scatter[j]) / sep[i, j])
    return float(worst.mean())


def distance(u, v, metric: str = "euclidean") -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if metric == "euclidean":
        return float(np.linalg.norm(u - v))
    if metric == "cosine":
        nu, nv = np.linalg.norm(u), np.linalg.norm(v)
        if nu == 0 or nv == 0:
            return 1.0
        return float(max(0.0, 1.0 - (u @ v) / (nu * nv)))
    raise ValueError(f"unknown metric {metric!r}")


def knn_retrieve(query, db, k: int, metric: str = "euclidean",
                 query_id: str | None = None, self_exclude: bool = False):
    """``k`` nearest ``(id, distance)`` pairs, ascending; ties by id."""
    if not db:
        raise ValueError("empty database")
    pool = [(rid, v) for rid, v in db if not (self_exclude and rid == query_id)]
    if k > len(pool):
        raise ValueError(f"k={k} exceeds database size {len(pool)}")
    scored = sorted(((distance(query, v, metric), rid) for rid, v in pool),
                    key=lambda t: (t[0], t[1]))
    return [(rid, d) for d, rid in scored[:k]]


def pairwise_distances(vectors, metric: str = "euclidean") -> DistanceMatrix:
    """Accepts raw vectors or anything with a ``full`` vector attribute."""
    vecs = [np.asarray(getattr(v, "full", v), dtype=np.float64) for v in vectors]
    if len({v.shape for v in vecs}) > 1:
        raise ValueError("vectors must share one dimension")
    n = len(vecs)
    d = np.zeros((n, n))
    if metric == "euclidean" and n > 1:
        d = _pair_dists(np.array(vecs))
    elif metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    else:
        for i in range(n):
            for j in range(i + 1, n):
                d[i, j] = distance(vecs[i], vecs[j], metric)
    d = np.triu(d, 1)
    return DistanceMatrix(d + d.T)


# ---------------------------------------------------------------------------
# UPGMA

@dataclass
class TreeNode:
    height: float
    name: str | None = None
    children: tuple = ()
    size: int = 1
    first_leaf: int = 0

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class LinkageTree:
    root: TreeNode
    # (left, right, height, size) per merge, leaves numbered 0..n-1 and
    # merges n, n+1, ..; same layout as a scipy linkage matrix
    merges: list
    method: str = "UPGMA"

    def newick(self, precision: int = 6) -> str:
        return newick(self.root, precision) + ";"

    def heights(self) -> list[float]:
        return [m[2] for m in self.merges]


def _fmt(x, precision):
    s = f"{x:.{precision}g}"
    return "0" if s == "-0" else s


def newick(node: TreeNode, precision: int = 6) -> str:
    if node.is_leaf:
        return node.name
    parts = [f"{newick(c, precision)}:{_fmt(node.height - c.height, precision)}"
             for c in node.children]
    return "(" + ",".join(parts) + ")"


def upgma(D: DistanceMatrix, leaf_names) -> LinkageTree:
    """Average-linkage agglomeration; a merge sits at half the pair distance.

    Closest pair first; equal distances resolve to the pair created earliest.
    Children are ordered by their lowest leaf index.
    """
    if not isinstance(D, DistanceMatrix):
        D = DistanceMatrix(D)
    n = D.n
    names = list(leaf_names)
    if n < 2:
        raise ValueError("UPGMA needs at least two leaves")
    if len(names) != n:
        raise ValueError("one name per leaf required")
    dist = D.entries.copy()
    np.fill_diagonal(dist, np.inf)
    nodes = {i: TreeNode(0.0, str(names[i]), first_leaf=i) for i in range(n)}
    active = list(range(n))
    index = {i: i for i in range(n)}  # cluster label -> row in dist
    merges = []
    next_label = n
    while len(active) > 1:
        rows = [index[a] for a in active]
        sub = dist[np.ix_(rows, rows)]
        flat = int(np.argmin(sub))
        i, j = divmod(flat, len(rows))
        a, b = sorted((active[i], active[j]))
        ra, rb = index[a], index[b]
        na, nb = nodes[a], nodes[b]
        h = dist[ra, rb] / 2.0
        kids = tuple(sorted((na, nb), key=lambda t: t.first_leaf))
        merged = TreeNode(h, None, kids, na.size + nb.size, kids[0].first_leaf)
        # average linkage update, stored in row ra
        for c in active:
            if c in (a, b):
                continue
            rc = index[c]
            val = (na.size * dist[ra, rc] + nb.size * dist[rb, rc]) / merged.size
            dist[ra, rc] = dist[rc, ra] = val
        dist[rb, :] = np.inf
        dist[:, rb] = np.inf
        merges.append((a, b, h, merged.size))
        active = [c for c in active if c not in (a, b)] + [next_label]
        index[next_label] = ra
        nodes[next_label] = merged
        next_label += 1
    return LinkageTree(nodes[active[0]], merges)


def temporal_splits(k: int) -> list[tuple[int, int]]:
    """Train on period i, test on each later period j: k(k-1)/2 runs."""
    if k < 1:
        raise ValueError("need at least one period")
    return [(i, j) for i in range(k) for j in range(i + 1, k)]
