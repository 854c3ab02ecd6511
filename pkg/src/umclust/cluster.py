"""Per-view cluster analysis: K-means, silhouettes, reliable-view weights.

All functions here are pure with respect to their inputs and deterministic
given a seed; the trainer calls them on every batch, so K-means is kept cheap
(k-means++ seeding, Lloyd iterations, one restart by default).
"""

from dataclasses import dataclass

import numpy as np

from .util import rng_for


@dataclass
class ClusterState:
    """K-means output for one view's batch.

    ``mean_dist`` holds the per-cluster mean Euclidean distance to the
    centroid (NaN for empty clusters) and ``view_silhouette`` the view's mean
    silhouette; both are filled in by the caller after ``kmeans``.
    """

    view: int
    assignments: np.ndarray
    centroids: np.ndarray
    sizes: np.ndarray
    mean_dist: np.ndarray | None = None
    view_silhouette: float | None = None


@dataclass
class ReliableWeights:
    """V x V guidance weight matrix plus the single most reliable view index.

    Row v weights the views allowed to guide view v, i.e. those with a
    silhouette at least as high as view v's own.
    """

    mode: str
    W: np.ndarray
    reliable_index: int


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """n x m matrix of squared Euclidean distances, floored at 0."""
    d = (a * a).sum(axis=1)[:, None] - 2.0 * (a @ b.T) + (b * b).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_plus_plus(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = z.shape[0]
    centroids = np.empty((k, z.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = z[first]
    d2 = pairwise_sq_dists(z, centroids[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            pick = int(rng.integers(n))
        else:
            target = rng.random() * total
            pick = int(np.searchsorted(np.cumsum(d2), target, side="right"))
            pick = min(pick, n - 1)
        centroids[j] = z[pick]
        d2 = np.minimum(d2, pairwise_sq_dists(z, centroids[j:j + 1])[:, 0])
    return centroids


def _lloyd(z: np.ndarray, centroids: np.ndarray, k: int, max_iters: int):
    n = z.shape[0]
    prev = None
    assignments = None
    for _ in range(max_iters):
        d = pairwise_sq_dists(z, centroids)
        assignments = d.argmin(axis=1)
        sizes = np.bincount(assignments, minlength=k)
        if (sizes == 0).any():
            # re-seed each empty cluster to the point farthest from its centroid
            own = d[np.arange(n), assignments].copy()
            for j in np.flatnonzero(sizes == 0):
                far = int(own.argmax())
                assignments[far] = j
                centroids[j] = z[far]
                own[far] = -1.0
            sizes = np.bincount(assignments, minlength=k)
        if prev is not None and np.array_equal(assignments, prev):
            break
        prev = assignments.copy()
        for j in range(k):
            members = z[assignments == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
    sizes = np.bincount(assignments, minlength=k)
    sse = float(((z - centroids[assignments]) ** 2).sum())
    return assignments.astype(np.int64), centroids, sizes.astype(np.int64), sse


def kmeans(z: np.ndarray, k: int, seed, max_iters: int = 50,
           restarts: int = 1, view: int = 0) -> ClusterState:
    """Lloyd K-means with k-means++ seeding.

    ``seed`` may be an int or a tuple of ints (e.g. (run_seed, epoch, batch,
    view)) so reruns of a training schedule reproduce every clustering
    exactly. With ``restarts`` > 1 the solution with the lowest
    within-cluster SSE wins (first one on ties).
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("kmeans expects a 2-D matrix")
    if z.shape[0] < k:
        raise ValueError(f"kmeans needs at least k={k} rows, got {z.shape[0]}")
    path = (seed,) if isinstance(seed, int) else tuple(seed)
    best = None
    for r in range(restarts):
        rng = rng_for(*path, 21, r)
        centroids = _kmeans_plus_plus(z, k, rng)
        assignments, centroids, sizes, sse = _lloyd(z, centroids.copy(), k, max_iters)
        if best is None or sse < best[3]:
            best = (assignments, centroids, sizes, sse)
    assignments, centroids, sizes, _ = best
    return ClusterState(view, assignments, centroids, sizes)


def silhouette_samples(z: np.ndarray, assignments: np.ndarray,
                       squared: bool = True) -> np.ndarray:
    """Per-sample silhouette values.

    For sample i with cluster c: a(i) is the mean distance to the other
    members of c, b(i) the minimum over other nonempty clusters of the mean
    distance to that cluster, and the silhouette is (b - a) / max(a, b).
    Samples in singleton clusters score 0, as does every sample when fewer
    than two clusters are nonempty. Distances are squared Euclidean by
    default (``squared=False`` switches to plain Euclidean).
    """
    z = np.asarray(z, dtype=np.float64)
    assignments = np.asarray(assignments)
    n = z.shape[0]
    if assignments.shape != (n,):
        raise ValueError("assignments length must match the number of rows")
    labels = np.unique(assignments)
    if len(labels) < 2:
        return np.zeros(n)
    # exact row differences (the Gram trick loses digits to cancellation)
    d = np.empty((n, n))
    for i in range(n):
        d[i] = ((z - z[i]) ** 2).sum(axis=1)
    if not squared:
        d = np.sqrt(d)
    members = [np.flatnonzero(assignments == lab) for lab in labels]
    counts = np.array([m.size for m in members], dtype=np.float64)
    sums = np.empty((n, len(labels)))
    for c, m in enumerate(members):
        sums[:, c] = d[:, m].sum(axis=1)
    own_col = np.searchsorted(labels, assignments)
    own_count = counts[own_col]
    sil = np.zeros(n)
    multi = own_count > 1
    a = np.zeros(n)
    a[multi] = sums[np.arange(n), own_col][multi] / (own_count[multi] - 1.0)
    means = sums / counts[None, :]
    means[np.arange(n), own_col] = np.inf    # exclude own cluster from b
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    ok = multi & (denom > 0)
    sil[ok] = (b[ok] - a[ok]) / denom[ok]
    return sil


def view_silhouette(sample_sils: np.ndarray) -> float:
    """Mean per-sample silhouette; the reliability score of a view."""
    sample_sils = np.asarray(sample_sils, dtype=np.float64)
    if sample_sils.size == 0:
        raise ValueError("view_silhouette of an empty batch")
    return float(sample_sils.mean())


def select_reliable_view(sils) -> int:
    """Index of the view with the highest silhouette (lowest index on ties)."""
    sils = np.asarray(sils, dtype=np.float64)
    if sils.size < 1:
        raise ValueError("need at least one view")
    return int(np.argmax(sils))


def _sigmoid(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def reliable_weights(sils, mode: str = "sigmoid") -> ReliableWeights:
    """Weight matrix over reliable views for each view.

    Row v considers the candidate set {r : sils^r >= sils^v} (itself
    included). Modes:

    * ``sigmoid``: logistic-transformed silhouettes normalized within the
      candidate set, so every row sums to 1;
    * ``uniform``: weight 1 for every candidate;
    * ``normalized``: raw silhouettes normalized within the candidate set
      (may contain negative entries; a zero candidate sum is an error).
    """
    sils = np.asarray(sils, dtype=np.float64)
    v_count = sils.size
    if v_count < 1:
        raise ValueError("need at least one view")
    if mode not in ("sigmoid", "uniform", "normalized"):
        raise ValueError(f"unknown weight mode {mode!r}")
    w = np.zeros((v_count, v_count))
    for v in range(v_count):
        mask = sils >= sils[v]
        if mode == "uniform":
            w[v] = mask.astype(np.float64)
        elif mode == "sigmoid":
            s = _sigmoid(sils) * mask
            w[v] = s / s.sum()
        else:
            s = sils * mask
            total = s.sum()
            if total == 0.0:
                raise ZeroDivisionError(
                    f"normalized weights: candidate silhouettes of view {v} sum to 0")
            w[v] = s / total
    return ReliableWeights(mode, w, select_reliable_view(sils))


def cluster_mean_distances(z: np.ndarray, state: ClusterState) -> np.ndarray:
    """Mean Euclidean distance of each cluster's members to its centroid.

    Plain (unsquared) norms; empty clusters get NaN and are excluded by the
    compactness loss upstream.
    """
    z = np.asarray(z, dtype=np.float64)
    k = state.centroids.shape[0]
    out = np.full(k, np.nan)
    dists = np.sqrt(pairwise_sq_dists(z, state.centroids))
    for j in range(k):
        members = state.assignments == j
        if members.any():
            out[j] = float(dists[members, j].mean())
    return out
