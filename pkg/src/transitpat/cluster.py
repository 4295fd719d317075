"""k-means clustering of stops on standardised location and usage features.

Features are (latitude, longitude, vehicle count) per stop, each z-scored
with the population standard deviation. Clustering minimises the total
squared Euclidean distance of points to their cluster centroid (inertia)
using Lloyd's algorithm seeded by k-means++, best of several restarts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .ingest import Stop
from .usage import StopUsage

DEFAULT_K = 4
DEFAULT_SEED = 42
DEFAULT_RESTARTS = 20
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-6

FEATURE_NAMES = ("latitude", "longitude", "vehicle_count")


@dataclass
class StandardizedFeatures:
    row_ids: list
    matrix: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    constant_columns: np.ndarray

    def to_raw(self, standardized: np.ndarray) -> np.ndarray:
        """Map standardised coordinates back to raw feature units."""
        z = np.asarray(standardized, dtype=float)
        return np.where(self.constant_columns, self.means, z * self.stds + self.means)


def zscore(features, row_ids: Sequence | None = None) -> StandardizedFeatures:
    """Column-wise standardisation to zero mean and unit population variance.

    Constant columns become zeros and are flagged rather than divided by zero.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError("features must be a 2-d array")
    if len(x) < 2:
        raise ValueError("standardisation needs at least 2 rows")
    # Corrected two-pass centring: the residual mean of the centred data removes
    # the rounding error of the first mean when |mean| >> std.
    means = x.mean(axis=0)
    centred = x - means
    drift = centred.mean(axis=0)
    centred -= drift
    means = means + drift
    stds = np.sqrt((centred * centred).mean(axis=0))
    # a spread that underflows to zero std is as good as constant
    constant = (x == x[0]).all(axis=0) | (stds == 0)
    safe = np.where(constant, 1.0, stds)
    z = np.where(constant, 0.0, centred / safe)
    z -= np.where(constant, 0.0, z.mean(axis=0))
    ids = list(range(len(x))) if row_ids is None else list(row_ids)
    return StandardizedFeatures(ids, z, means, stds, constant)


@dataclass
class ClusterModel:
    k: int
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    iterations: int
    seed: int
    restarts: int
    row_ids: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @property
    def assignments(self) -> dict:
        return {rid: int(c) for rid, c in zip(self.row_ids, self.labels)}

    def sizes(self) -> list[int]:
        return np.bincount(self.labels, minlength=self.k).tolist()


def inertia(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    """Total squared distance of each row to its assigned centroid."""
    diff = x - centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return cdist(x, centroids, "sqeuclidean")


def kmeans_plus_plus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = [x[rng.integers(n)]]
    closest = _sq_dists(x, np.asarray(centers)).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers.append(x[idx])
        closest = np.minimum(closest, _sq_dists(x, x[idx][None, :]).ravel())
    return np.array(centers)


def _repair_empty(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray,
                  d2: np.ndarray) -> np.ndarray:
    """Give each empty cluster the point farthest from its centroid.

    The emptied centroid is moved onto that point (in place), so the
    objective cannot rise.
    """
    k = len(centroids)
    labels = labels.copy()
    rows = np.arange(len(x))
    for c in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[c] > 0:
            continue
        own = d2[rows, labels].copy()
        # Never strip a singleton cluster of its only point.
        own[counts[labels] <= 1] = -np.inf
        far = int(np.argmax(own))
        labels[far] = c
        centroids[c] = x[far]
        d2[:, c] = ((x - x[far]) ** 2).sum(axis=1)
    return labels


def _means(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((k, x.shape[1]))
    np.add.at(out, labels, x)
    return out / np.bincount(labels, minlength=k)[:, None]


def lloyd(x: np.ndarray, init: np.ndarray, max_iterations: int = DEFAULT_MAX_ITER,
          tolerance: float = DEFAULT_TOL):
    """Run Lloyd iterations from ``init`` centroids.

    Returns ``(centroids, labels, inertia, iterations, history)`` where
    ``history`` holds the objective after every assignment and every update
    step, starting from the first assignment.
    """
    k = len(init)
    centroids = np.array(init, dtype=float)
    history = []
    it = 0
    labels = None
    while True:
        d2 = _sq_dists(x, centroids)
        new_labels = d2.argmin(axis=1)
        if labels is not None:
            # Keep the current label on exact ties so the objective never rises.
            keep = d2[np.arange(len(x)), labels] <= d2[np.arange(len(x)), new_labels]
            new_labels = np.where(keep, labels, new_labels)
        labels = _repair_empty(x, new_labels, centroids, d2)
        history.append(inertia(x, labels, centroids))
        new_centroids = _means(x, labels, k)
        history.append(inertia(x, labels, new_centroids))
        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        it += 1
        if shift < tolerance or it >= max_iterations:
            break
    return centroids, labels, inertia(x, labels, centroids), it, history


def kmeans(features, k: int = DEFAULT_K, seed: int = DEFAULT_SEED,
           restarts: int = DEFAULT_RESTARTS, max_iterations: int = DEFAULT_MAX_ITER,
           tolerance: float = DEFAULT_TOL, init: np.ndarray | None = None) -> ClusterModel:
    """Best-of-``restarts`` k-means.

    ``features`` may be a :class:`StandardizedFeatures` or a plain array. The
    winning restart minimises (inertia, restart index). Passing ``init`` runs a
    single Lloyd descent from the given centroids.
    """
    if isinstance(features, StandardizedFeatures):
        x, row_ids = features.matrix, list(features.row_ids)
    else:
        x = np.asarray(features, dtype=float)
        row_ids = list(range(len(x)))
    n = len(x)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if restarts < 1:
        raise ValueError("restarts must be at least 1")

    if init is not None:
        starts = [np.asarray(init, dtype=float)]
    else:
        streams = np.random.SeedSequence(seed).spawn(restarts)
        starts = [kmeans_plus_plus(x, k, np.random.default_rng(s)) for s in streams]

    best = None
    for start in starts:
        run = lloyd(x, start, max_iterations, tolerance)
        if best is None or run[2] < best[2]:
            best = run
    centroids, labels, obj, iters, history = best
    return ClusterModel(k=k, centroids=centroids, labels=labels, inertia=obj, iterations=iters,
                        seed=seed, restarts=len(starts), row_ids=row_ids, history=history)


def silhouette_mean(x: np.ndarray, labels: np.ndarray) -> float | None:
    """Mean silhouette width; singletons score 0. None when fewer than 2 clusters."""
    labels = np.asarray(labels)
    clusters = np.unique(labels)
    if len(clusters) < 2:
        return None
    d = cdist(x, x)
    n = len(x)
    sizes = np.bincount(labels)
    sums = np.zeros((n, labels.max() + 1))
    for c in clusters:
        sums[:, c] = d[:, labels == c].sum(axis=1)
    own = sizes[labels]
    a = np.where(own > 1, sums[np.arange(n), labels] / np.maximum(own - 1, 1), 0.0)
    other = np.full((n, sums.shape[1]), np.inf)
    for c in clusters:
        other[:, c] = sums[:, c] / sizes[c]
    other[np.arange(n), labels] = np.inf
    b = other.min(axis=1)
    s = np.where(own > 1, (b - a) / np.maximum(a, b), 0.0)
    return float(s.mean())


@dataclass
class KSelectionRow:
    k: int
    inertia: float
    min_cluster_size: int
    silhouette: float | None


def _farthest_point(x: np.ndarray, model: ClusterModel) -> np.ndarray:
    d2 = ((x - model.centroids[model.labels]) ** 2).sum(axis=1)
    return x[int(np.argmax(d2))]


def k_selection_report(features, k_range: Sequence[int], seed: int = DEFAULT_SEED,
                       restarts: int = DEFAULT_RESTARTS) -> list[KSelectionRow]:
    """Inertia, smallest cluster and silhouette for each candidate k.

    If a larger k ever fits worse than the previous one, the larger k is
    re-run from the previous centroids plus its worst-fit point, which
    guarantees non-increasing inertia over consecutive k.
    """
    x = features.matrix if isinstance(features, StandardizedFeatures) \
        else np.asarray(features, dtype=float)
    rows = []
    prev_k, prev = None, None
    for k in sorted(set(int(k) for k in k_range)):
        model = kmeans(features, k, seed=seed, restarts=restarts)
        if prev is not None and k == prev_k + 1 and model.inertia > prev.inertia:
            init = np.vstack([prev.centroids, _farthest_point(x, prev)])
            alt = kmeans(features, k, seed=seed, init=init)
            if alt.inertia < model.inertia:
                model = alt
        rows.append(KSelectionRow(k, model.inertia, int(min(model.sizes())),
                                  silhouette_mean(x, model.labels)))
        prev_k, prev = k, model
    return rows


def build_feature_matrix(stops: Sequence[Stop], usage: Sequence[StopUsage]) -> np.ndarray:
    counts = {u.stop_id: u.vehicle_count for u in usage}
    missing = [s.stop_id for s in stops if s.stop_id not in counts]
    if missing:
        raise ValueError(f"usage is missing {len(missing)} stops, e.g. {missing[:3]}")
    return np.array([(s.latitude, s.longitude, counts[s.stop_id]) for s in stops], dtype=float)


@dataclass(frozen=True)
class ClusteredStop:
    stop_id: str
    latitude: float
    longitude: float
    vehicle_count: int
    cluster: int


def cluster_stops(stops: Sequence[Stop], usage: Sequence[StopUsage], k: int = DEFAULT_K,
                  seed: int = DEFAULT_SEED, restarts: int = DEFAULT_RESTARTS,
                  max_iterations: int = DEFAULT_MAX_ITER, tolerance: float = DEFAULT_TOL):
    """Standardise (lat, lon, count) per stop and cluster.

    Returns ``(model, features, table)`` where ``table`` lists one
    :class:`ClusteredStop` per input stop in input order.
    """
    raw = build_feature_matrix(stops, usage)
    feats = zscore(raw, [s.stop_id for s in stops])
    model = kmeans(feats, k, seed=seed, restarts=restarts, max_iterations=max_iterations,
                   tolerance=tolerance)
    table = [ClusteredStop(s.stop_id, s.latitude, s.longitude, int(row[2]), int(c))
             for s, row, c in zip(stops, raw, model.labels)]
    return model, feats, table


def _quartiles(values: np.ndarray) -> tuple[float, float, float, float, float]:
    q = np.percentile(values, [0, 25, 50, 75, 100], method="linear")
    return tuple(float(v) for v in q)


def cluster_summary(model: ClusterModel, table: Sequence[ClusteredStop]) -> list[dict]:
    """Per-cluster activity distribution with 1.5 IQR outliers."""
    out = []
    for c in range(model.k):
        members = [row for row in table if row.cluster == c]
        counts = np.array([row.vehicle_count for row in members], dtype=float)
        if counts.size == 0:
            out.append({"cluster": c, "count": 0})
            continue
        lo, q1, med, q3, hi = _quartiles(counts)
        iqr = q3 - q1
        fence_lo, fence_hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        outliers = [{"stop_id": row.stop_id, "vehicle_count": row.vehicle_count}
                    for row in members
                    if row.vehicle_count < fence_lo or row.vehicle_count > fence_hi]
        out.append({
            "cluster": c,
            "count": len(members),
            "activity": {"min": lo, "q1": q1, "median": med, "q3": q3, "max": hi},
            "fences": [fence_lo, fence_hi],
            "outliers": outliers,
        })
    return out


def model_to_dict(model: ClusterModel, feats: StandardizedFeatures) -> dict:
    return {
        "k": model.k,
        "seed": model.seed,
        "restarts": model.restarts,
        "iterations": model.iterations,
        "inertia": model.inertia,
        "features": list(FEATURE_NAMES),
        "feature_means": feats.means.tolist(),
        "feature_stds": feats.stds.tolist(),
        "constant_columns": feats.constant_columns.tolist(),
        "centroids_standardized": model.centroids.tolist(),
        "centroids_raw": feats.to_raw(model.centroids).tolist(),
        "sizes": model.sizes(),
    }
