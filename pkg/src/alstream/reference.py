"""Initial reference-set construction.

The normal reference set starts as k-means centers of the source-domain
training normals plus the raw target-domain training normals (the target
side is too small to cluster). Clustering is plain Lloyd's algorithm on
Euclidean distance, seeded so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scoring import ReferenceSets
from .types import as_embedding


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 32
    max_iterations: int = 100
    tolerance: float = 1e-6  # relative objective decrease
    seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


@dataclass
class KMeansResult:
    centers: np.ndarray
    # within-cluster sum of squared distances after each Lloyd update
    objective_history: list[float] = field(default_factory=list)
    n_iterations: int = 0


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeding by squared-distance-weighted sampling: the first center is
    uniform, each next one is drawn with probability proportional to its
    squared distance to the nearest chosen center."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total == 0.0:
            # all remaining points coincide with a chosen center
            centers[i] = points[rng.integers(n)]
            continue
        centers[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def _assign(points: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # ||p - c||^2 = ||p||^2 - 2 p.c + ||c||^2 ; ||p||^2 dropped (constant per row)
    cross = points @ centers.T
    d2 = np.sum(centers**2, axis=1)[None, :] - 2.0 * cross
    labels = np.argmin(d2, axis=1)
    full_d2 = np.sum(points**2, axis=1) + d2[np.arange(points.shape[0]), labels]
    return labels, np.maximum(full_d2, 0.0)


def kmeans_fit(points, cfg: KMeansConfig) -> KMeansResult:
    """Run seeded Lloyd iterations; exposes the per-iteration objective.

    Empty clusters are refilled with the point currently farthest from its
    assigned center, so exactly ``k`` centers always come back.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a non-empty (n, dim) array")
    n = pts.shape[0]
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds number of points ({n})")

    rng = np.random.default_rng(cfg.seed)
    centers = _plusplus_init(pts, cfg.k, rng)

    history: list[float] = []
    prev_obj = np.inf
    iterations = 0
    for _ in range(cfg.max_iterations):
        labels, d2 = _assign(pts, centers)

        # refill empty clusters before the mean update
        counts = np.bincount(labels, minlength=cfg.k)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(d2))
            centers[j] = pts[far]
            labels[far] = j
            d2[far] = 0.0
            counts = np.bincount(labels, minlength=cfg.k)

        new_centers = np.empty_like(centers)
        for j in range(cfg.k):
            new_centers[j] = pts[labels == j].mean(axis=0)
        centers = new_centers

        _, d2 = _assign(pts, centers)
        obj = float(d2.sum())
        history.append(obj)
        iterations += 1
        if prev_obj < np.inf:
            denom = prev_obj if prev_obj > 0 else 1.0
            if (prev_obj - obj) / denom < cfg.tolerance:
                break
        prev_obj = obj

    return KMeansResult(centers=centers, objective_history=history, n_iterations=iterations)


def kmeans(points, cfg: KMeansConfig) -> np.ndarray:
    """Cluster centers of ``points``; deterministic for a fixed seed."""
    return kmeans_fit(points, cfg).centers


def build_initial_reference(source_normals, target_normals, cfg: KMeansConfig) -> ReferenceSets:
    """Normal set = k centers of the source normals followed by all target
    normals verbatim; anomalous set starts empty."""
    src = [as_embedding(e) for e in source_normals]
    tgt = [as_embedding(e) for e in target_normals]
    if not src:
        raise ValueError("source normals must be non-empty")
    centers = kmeans(np.stack(src), cfg)
    members = list(centers) + tgt
    return ReferenceSets(normal=members, dim=src[0].size)
