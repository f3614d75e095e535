"""Point-cloud quantization: oversample, k-means++ seed, optional Lloyd steps,
Voronoi-count weights."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np


class DegenerateSupportWarning(UserWarning):
    """Fewer distinct points than requested centers; duplicates were used."""


@dataclass
class QuantizeConfig:
    k: int = 2000
    lloyd_steps: int = 0
    seed: int = 0
    oversample_cap: int | None = None  # default: all available points

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.lloyd_steps < 0:
            raise ValueError(f"lloyd_steps must be >= 0, got {self.lloyd_steps}")
        if self.oversample_cap is not None and self.oversample_cap < self.k:
            raise ValueError(
                f"oversample_cap {self.oversample_cap} smaller than k {self.k}"
            )


@dataclass
class QuantizedDistribution:
    """k centers with a probability weight per center (simplex within 1e-12)."""

    centers: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.centers = np.ascontiguousarray(self.centers, dtype=np.float64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.centers.ndim != 2:
            raise ValueError(f"centers must be 2-d, got shape {self.centers.shape}")
        if self.weights.shape != (self.centers.shape[0],):
            raise ValueError(
                f"weights shape {self.weights.shape} does not match {self.centers.shape[0]} centers"
            )
        if not np.isfinite(self.centers).all() or not np.isfinite(self.weights).all():
            raise ValueError("non-finite centers or weights")
        if (self.weights < 0).any():
            raise ValueError("negative weights")
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {total!r}, expected 1 within 1e-12")

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]


def oversample_size(k: int, n: int) -> int:
    """ceil(k^2 ln k) capped at n; the support size sampled before seeding."""
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if k == 1:
        return 1
    return min(n, math.ceil(k * k * math.log(k)))


def sample_support(X: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    """m rows of X drawn uniformly without replacement (X itself when m == n)."""
    n = X.shape[0]
    if m > n:
        raise ValueError(f"cannot sample {m} rows from {n} without replacement")
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    if m == n:
        return X
    idx = rng.choice(n, size=m, replace=False)
    return X[idx]


def _sq_dists_to(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = points - center
    return np.einsum("ij,ij->i", diff, diff)


def _pairwise_sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # expanded form: |p|^2 + |c|^2 - 2 p.c  (clamped; BLAS-friendly)
    p2 = np.einsum("ij,ij->i", points, points)[:, None]
    c2 = np.einsum("ij,ij->i", centers, centers)[None, :]
    d2 = p2 + c2 - 2.0 * (points @ centers.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def assignments(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Nearest-center index per point; ties go to the lowest center index."""
    return np.argmin(_pairwise_sq_dists(points, centers), axis=1)


def quantization_cost(points: np.ndarray, centers: np.ndarray) -> float:
    """Sum of squared distances from each point to its nearest center."""
    return float(_pairwise_sq_dists(points, centers).min(axis=1).sum())


def kmeanspp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, the rest D^2-proportional.

    If every remaining squared distance is zero (fewer distinct points than k)
    a DegenerateSupportWarning is issued and the remaining centers repeat
    uniformly chosen points.
    """
    m = points.shape[0]
    if k > m:
        raise ValueError(f"cannot seed {k} centers from {m} points")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = rng.integers(m)
    d2 = _sq_dists_to(points, points[chosen[0]])
    warned = False
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            if not warned:
                warnings.warn(
                    f"fewer than {k} distinct points; duplicating centers",
                    DegenerateSupportWarning,
                    stacklevel=2,
                )
                warned = True
            idx = int(rng.integers(m))
        else:
            idx = int(rng.choice(m, p=d2 / total))
        chosen[j] = idx
        np.minimum(d2, _sq_dists_to(points, points[idx]), out=d2)
    return points[chosen].copy()


def lloyd_step(points: np.ndarray, centers: np.ndarray, steps: int = 1) -> np.ndarray:
    """`steps` rounds of assign-to-nearest / recompute-means.

    Empty cells keep their previous center. steps=0 returns centers unchanged.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    centers = np.array(centers, dtype=np.float64, copy=True)
    k = centers.shape[0]
    for _ in range(steps):
        assign = assignments(points, centers)
        counts = np.bincount(assign, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, assign, points)
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
    return centers


def voronoi_weights(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Fraction of points landing in each center's Voronoi cell (may be zero)."""
    assign = assignments(points, centers)
    counts = np.bincount(assign, minlength=centers.shape[0])
    return counts / points.shape[0]


def repair_empty_cells(
    points: np.ndarray, centers: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Replace zero-weight centers until every cell is occupied.

    Each round moves one empty center onto the point farthest from its nearest
    center, then recounts. Needs at most k rounds; raises ValueError if the
    point set cannot occupy every cell (fewer distinct points than centers).
    """
    centers = np.array(centers, dtype=np.float64, copy=True)
    k = centers.shape[0]
    counts = np.asarray(weights * points.shape[0])
    for _ in range(k):
        empty = np.flatnonzero(counts == 0)
        if empty.size == 0:
            break
        d2 = _pairwise_sq_dists(points, centers)
        nearest = d2.min(axis=1)
        if nearest.max() <= 0.0:
            raise ValueError(
                f"cannot fill {empty.size} empty cells: fewer distinct points than centers"
            )
        centers[empty[0]] = points[int(np.argmax(nearest))]
        counts = np.bincount(assignments(points, centers), minlength=k)
    else:
        counts = np.bincount(assignments(points, centers), minlength=k)
        if (counts == 0).any():
            raise ValueError("empty cells persist after k repair rounds")
    return centers, counts / points.shape[0]


def quantize(
    X: np.ndarray, cfg: QuantizeConfig, rng: np.random.Generator | None = None
) -> QuantizedDistribution:
    """Compress an n-point cloud into a k-point weighted distribution.

    Pipeline: subsample min(ceil(k^2 ln k), n, oversample_cap) support points,
    k-means++ seed k centers, run cfg.lloyd_steps Lloyd rounds, weight centers
    by Voronoi counts over the support (empty cells repaired).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds number of points n={n}")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    m = oversample_size(cfg.k, n)
    if cfg.oversample_cap is not None:
        m = min(m, cfg.oversample_cap)
    support = sample_support(X, m, rng)
    centers = kmeanspp_seed(support, cfg.k, rng)
    if cfg.lloyd_steps:
        centers = lloyd_step(support, centers, cfg.lloyd_steps)
    weights = voronoi_weights(support, centers)
    if (weights == 0).any():
        centers, weights = repair_empty_cells(support, centers, weights)
    return QuantizedDistribution(centers, weights)
