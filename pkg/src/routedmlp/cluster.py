"""K-means with restarts, silhouette / WCSS-elbow k selection, and
feature standardization.

All of it is hand-rolled on numpy: Lloyd iterations with k-means++ seeding,
deterministic empty-cluster repair, and best-of-restarts selection by WCSS
with seed-index tie-break (so parallel restart scheduling cannot change the
result).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin

from .rng import derive_rng

MAX_LLOYD_ITER = 300


class Standardizer(BaseEstimator, TransformerMixin):
    """Per-feature mean/std scaling fitted on training rows.

    Uses the population standard deviation. Zero-variance features get
    std 1 and are flagged in `degenerate_`, so their standardized values
    come out as all zeros.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or len(X) < 2:
            raise ValueError("standardizer needs at least 2 rows")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)  # population
        self.degenerate_ = std == 0.0
        self.std_ = np.where(self.degenerate_, 1.0, std)
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[1] != len(self.mean_):
            raise ValueError(
                f"expected {len(self.mean_)} features, got {X.shape[1]}"
            )
        return (X - self.mean_) / self.std_

    def to_jsonable(self) -> dict:
        return {
            "mean": self.mean_.tolist(),
            "std": self.std_.tolist(),
            "degenerate": self.degenerate_.tolist(),
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "Standardizer":
        s = cls()
        s.mean_ = np.asarray(obj["mean"], dtype=float)
        s.std_ = np.asarray(obj["std"], dtype=float)
        s.degenerate_ = np.asarray(obj["degenerate"], dtype=bool)
        return s


def _assign(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # ties go to the lowest cluster id (argmin returns the first minimum)
    d2 = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def _inertia(X: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    return float(((X - centroids[labels]) ** 2).sum())


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0.0:
            centroids[j] = X[rng.integers(n)]
        else:
            centroids[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _lloyd(X: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    labels = _assign(X, centroids)
    for _ in range(MAX_LLOYD_ITER):
        new_centroids = centroids.copy()
        for j in range(len(centroids)):
            members = X[labels == j]
            if len(members):
                new_centroids[j] = members.mean(axis=0)
            else:
                # repair: reseed at the point farthest from its own centroid
                d2 = ((X - new_centroids[labels]) ** 2).sum(axis=1)
                new_centroids[j] = X[int(np.argmax(d2))]
        new_labels = _assign(X, new_centroids)
        centroids = new_centroids
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return centroids, labels, _inertia(X, centroids, labels)


class KMeans(BaseEstimator, ClusterMixin):
    """Lloyd's algorithm with k-means++ seeding and restarts."""

    def __init__(self, n_clusters: int = 2, n_restarts: int = 10, seed: int = 0):
        self.n_clusters = n_clusters
        self.n_restarts = n_restarts
        self.seed = seed

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be >= 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        n_distinct = len(np.unique(X, axis=0))
        if self.n_clusters > n_distinct:
            raise ValueError(
                f"n_clusters={self.n_clusters} exceeds {n_distinct} distinct points"
            )
        best = None
        for r in range(self.n_restarts):
            rng = derive_rng(self.seed, "restart", r)
            init = _kmeanspp_init(X, self.n_clusters, rng)
            centroids, labels, inertia = _lloyd(X, init)
            # strict < keeps the lowest restart index on ties, independent
            # of any parallel scheduling order
            if best is None or inertia < best[0] - 0.0:
                best = (inertia, r, centroids, labels)
        self.inertia_, _, self.cluster_centers_, self.labels_ = best
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.cluster_centers_.shape[1]:
            raise ValueError(
                f"expected {self.cluster_centers_.shape[1]}-dimensional points, "
                f"got {X.shape[1]}"
            )
        return _assign(X, self.cluster_centers_)

    def to_jsonable(self) -> dict:
        return {
            "n_clusters": self.n_clusters,
            "n_restarts": self.n_restarts,
            "seed": self.seed,
            "centroids": self.cluster_centers_.tolist(),
            "inertia": self.inertia_,
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "KMeans":
        model = cls(obj["n_clusters"], obj["n_restarts"], obj["seed"])
        model.cluster_centers_ = np.asarray(obj["centroids"], dtype=float)
        model.inertia_ = float(obj["inertia"])
        return model


def silhouette(X, assignments) -> float:
    """Mean silhouette score, (b - a) / max(a, b) per point.

    Points in singleton clusters score 0. Requires at least 2 non-empty
    clusters.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    labels = np.asarray(assignments)
    ids = np.unique(labels)
    if len(ids) < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    dists = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(len(X))
    for i in range(len(X)):
        own = labels == labels[i]
        n_own = own.sum()
        if n_own == 1:
            continue
        a = dists[i, own].sum() / (n_own - 1)
        b = min(dists[i, labels == c].mean() for c in ids if c != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


@dataclass
class KSelection:
    """k-selection diagnostics: scores per candidate k plus the choice."""

    ks: list[int]
    wcss: list[float] = field(default_factory=list)
    silhouettes: list[float] = field(default_factory=list)
    chosen_k: int | None = None
    chosen_by: str = "manual"


def wcss_curve(X, k_min: int, k_max: int, n_restarts: int = 10, seed: int = 0) -> KSelection:
    """Best-of-restarts WCSS for each k in [k_min, k_max]."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n_distinct = len(np.unique(X, axis=0))
    if not 1 <= k_min <= k_max <= n_distinct:
        raise ValueError(
            f"invalid k range [{k_min}, {k_max}] for {n_distinct} distinct points"
        )
    ks = list(range(k_min, k_max + 1))
    wcss = [
        KMeans(k, n_restarts=n_restarts, seed=seed).fit(X).inertia_ for k in ks
    ]
    return KSelection(ks=ks, wcss=wcss)


def silhouette_curve(X, k_min: int, k_max: int, n_restarts: int = 10, seed: int = 0) -> KSelection:
    """Silhouette score of the best-of-restarts fit for each k; picks the max."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    sel = wcss_curve(X, k_min, k_max, n_restarts=n_restarts, seed=seed)
    if k_min < 2:
        raise ValueError("silhouette selection needs k_min >= 2")
    for k in sel.ks:
        model = KMeans(k, n_restarts=n_restarts, seed=seed).fit(X)
        sel.silhouettes.append(silhouette(X, model.labels_))
    sel.chosen_k = sel.ks[int(np.argmax(sel.silhouettes))]
    sel.chosen_by = "silhouette"
    return sel


@dataclass
class KneeResult:
    index: int
    found: bool  # False when the curve is (numerically) a straight line


def knee(values) -> KneeResult:
    """Index of maximum perpendicular distance to the first-to-last chord.

    Both axes are rescaled to [0, 1] first, so the result is invariant to
    positive affine scaling of the values. Ties take the smallest index;
    an exactly linear curve has no knee and returns index 0 flagged.
    """
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        raise ValueError("knee detection needs at least 3 values")
    x = np.linspace(0.0, 1.0, len(v))
    span = v[-1] - v[0] if v[-1] != v[0] else (v.max() - v.min() or 1.0)
    y = (v - v[0]) / span
    # distance from (x, y) to the chord joining (0, y0) and (1, y_last)
    x0, y0, x1, y1 = x[0], y[0], x[-1], y[-1]
    num = np.abs((y1 - y0) * x - (x1 - x0) * y + x1 * y0 - y1 * x0)
    dist = num / np.hypot(y1 - y0, x1 - x0)
    idx = int(np.argmax(dist))
    return KneeResult(index=idx, found=dist[idx] > 1e-12)


def select_k_elbow(X, k_min: int, k_max: int, n_restarts: int = 10, seed: int = 0) -> KSelection:
    """Pick k at the WCSS curve's knee."""
    sel = wcss_curve(X, k_min, k_max, n_restarts=n_restarts, seed=seed)
    result = knee(sel.wcss)
    sel.chosen_k = sel.ks[result.index]
    sel.chosen_by = "elbow"
    return sel
