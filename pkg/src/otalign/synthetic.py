"""Synthetic instances for tests and benchmarks: Gaussian-mixture clouds and
planted rotated-permutation embedding pairs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingMatrix, Lexicon
from .preprocess import normalize
from .procrustes import OrthogonalMap
from .scoring import retrieve


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed d x d orthogonal matrix."""
    Q, R = np.linalg.qr(rng.normal(size=(d, d)))
    return Q * np.sign(np.diag(R))


def gaussian_mixture(
    n: int,
    d: int,
    components: int = 5,
    spread: float = 3.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """n points from a random mixture of unit-covariance Gaussians."""
    rng = rng or np.random.default_rng(0)
    means = rng.normal(scale=spread, size=(components, d))
    labels = rng.integers(components, size=n)
    return means[labels] + rng.normal(size=(n, d))


@dataclass
class PlantedPair:
    """Two normalized embedding spaces related by a hidden rotation and a
    hidden permutation, with the gold correspondence attached.

    target_of_source[i] is the target row holding (a noisy rotation of)
    source row i.
    """

    src: EmbeddingMatrix
    tgt: EmbeddingMatrix
    rotation: np.ndarray = field(repr=False)
    target_of_source: np.ndarray = field(repr=False)
    lexicon: Lexicon = field(repr=False)

    def precision_at_1(
        self,
        W: OrthogonalMap,
        method: str = "nn",
        max_queries: int = 1000,
        seed: int = 0,
    ) -> float:
        """Fraction of (sampled) sources whose top retrieval is the planted row."""
        n = len(self.src)
        if max_queries >= n:
            rows = np.arange(n)
        else:
            rows = np.random.default_rng(seed).choice(n, size=max_queries, replace=False)
        top1 = retrieve(rows, self.src, self.tgt, W, method=method, top_k=1)[:, 0]
        return float((top1 == self.target_of_source[rows]).mean())


def planted_pair(
    n: int,
    d: int,
    noise: float = 0.01,
    window: int | None = 100,
    seed: int = 0,
    components: int = 10,
    within_scale: float = 1.5,
    spectrum_decay: float = 0.0,
) -> PlantedPair:
    """Build a source space and a rotated, permuted, noisy copy of it.

    The base cloud is a Gaussian mixture whose component occupancy drifts
    with row rank, echoing how word frequency correlates with topical
    composition in real vocabularies: the head rows are not a uniform sample
    of the whole cloud, which is what gives the convex initialization a
    usable signal on the head. within_scale sets the in-component spread
    (kept large so local geometry stays above the entropic blur scale);
    spectrum_decay > 0 tapers that spread across dimensions.

    The permutation displaces each row by at most ~window positions (None
    scrambles uniformly); a local permutation keeps the two heads covering
    the same rows, mirroring how frequent words in two languages span the
    same content.
    """
    if n < 2 or d < 2:
        raise ValueError(f"need n >= 2 and d >= 2, got n={n}, d={d}")
    if noise < 0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    if components < 1:
        raise ValueError(f"components must be >= 1, got {components}")
    if within_scale <= 0:
        raise ValueError(f"within_scale must be positive, got {within_scale}")
    if spectrum_decay < 0:
        raise ValueError(f"spectrum_decay must be >= 0, got {spectrum_decay}")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(components, d))
    band = (np.arange(n) * components) // n
    labels = np.clip(band + rng.integers(-2, 3, size=n), 0, components - 1)
    spread = within_scale * (1.0 + np.arange(d)) ** (-spectrum_decay)
    base = means[labels] + rng.normal(size=(n, d)) * spread[None, :]
    src = normalize(EmbeddingMatrix([f"s{i:06d}" for i in range(n)], base))
    R = random_orthogonal(d, rng)
    if window is None:
        order = rng.permutation(n)
    else:
        keys = np.arange(n) + rng.uniform(0.0, float(window), size=n)
        order = np.argsort(keys, kind="stable")
    # target row j holds source row order[j], rotated plus noise
    tgt_rows = src.vectors[order] @ R + noise * rng.normal(size=(n, d))
    tgt = normalize(EmbeddingMatrix([f"t{j:06d}" for j in range(n)], tgt_rows))
    target_of_source = np.empty(n, dtype=np.intp)
    target_of_source[order] = np.arange(n)
    pairs = {
        src.vocab[i]: {tgt.vocab[int(target_of_source[i])]} for i in range(n)
    }
    lexicon = Lexicon(pairs, n_kept=n, n_dropped=0, n_sources_skipped=0)
    return PlantedPair(src, tgt, R, target_of_source, lexicon)
