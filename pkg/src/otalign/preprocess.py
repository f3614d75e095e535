"""Row normalization applied to both spaces before alignment."""

from __future__ import annotations

import numpy as np

from .embeddings import EmbeddingMatrix

_ZERO_NORM = 1e-12
_MEAN_TOL = 1e-10
_MAX_PASSES = 200


def _unit_rows(vectors: np.ndarray, vocab: list[str], stage: str) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    bad = np.flatnonzero(norms < _ZERO_NORM)
    if bad.size:
        tok = vocab[int(bad[0])]
        raise ValueError(f"token {tok!r} has near-zero norm {stage} (cannot normalize)")
    return vectors / norms[:, None]


def normalize(emb: EmbeddingMatrix) -> EmbeddingMatrix:
    """Unit-norm rows, center columns, unit-norm rows again.

    Rescaling after centering nudges the column mean off zero, so the
    center/rescale pair is repeated until the mean is negligible; the result
    has unit rows, (near-)zero column means, and is a fixed point of the map
    itself. Raises ValueError naming the first token whose row collapses to
    (near) zero.
    """
    v = _unit_rows(emb.vectors, emb.vocab, "before centering")
    for _ in range(_MAX_PASSES):
        mean = v.mean(axis=0)
        if np.linalg.norm(mean) <= _MEAN_TOL:
            break
        v = _unit_rows(v - mean, emb.vocab, "after centering")
    return EmbeddingMatrix(list(emb.vocab), v)
