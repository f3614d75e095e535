"""Iterative self-training: induce a dictionary from the current map, refit
the map on the induced pairs, grow the vocabulary window, repeat."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .procrustes import OrthogonalMap, procrustes_closed_form
from .scoring import knn_mean_sims, unit_rows

_RETRIEVAL_MODES = ("nn", "csls")
_BLOCK = 512


@dataclass
class RefineConfig:
    epochs: int = 5
    retrieval: str = "csls"
    csls_knn: int = 10
    dict_vocab_schedule: tuple[int, ...] = (5000, 7500, 10000, 12500, 15000)
    mutual_only: bool = True

    def __post_init__(self):
        self.dict_vocab_schedule = tuple(int(v) for v in self.dict_vocab_schedule)
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.retrieval not in _RETRIEVAL_MODES:
            raise ValueError(f"retrieval must be one of {_RETRIEVAL_MODES}, got {self.retrieval!r}")
        if self.csls_knn < 1:
            raise ValueError(f"csls_knn must be positive, got {self.csls_knn}")
        if len(self.dict_vocab_schedule) < self.epochs:
            raise ValueError(
                f"dict_vocab_schedule has {len(self.dict_vocab_schedule)} entries for {self.epochs} epochs"
            )
        if any(v < 1 for v in self.dict_vocab_schedule):
            raise ValueError("dict_vocab_schedule entries must be positive")
        if any(b < a for a, b in zip(self.dict_vocab_schedule, self.dict_vocab_schedule[1:])):
            raise ValueError("dict_vocab_schedule must be non-decreasing")


def _vectors(X) -> np.ndarray:
    return np.asarray(getattr(X, "vectors", X), dtype=np.float64)


def induce_dictionary(
    X, Y, W: OrthogonalMap, cfg: RefineConfig, epoch: int = 0
) -> list[tuple[int, int]]:
    """Pseudo-dictionary (source row, target row) pairs for one refine epoch.

    Scores every pair inside the epoch's frequency window (cosine, or its
    CSLS adjustment) and keeps each source's best target; with mutual_only the
    pair survives only if the source is also that target's best source. Ties
    break toward lower indices.
    """
    if not 0 <= epoch < len(cfg.dict_vocab_schedule):
        raise ValueError(f"epoch {epoch} outside schedule of length {len(cfg.dict_vocab_schedule)}")
    Xv = _vectors(X)
    Yv = _vectors(Y)
    window = min(cfg.dict_vocab_schedule[epoch], Xv.shape[0], Yv.shape[0])
    Xw = unit_rows(Xv[:window] @ W.matrix)
    Yn = unit_rows(Yv[:window])
    if cfg.retrieval == "csls":
        r_src = knn_mean_sims(Xw, Yn, cfg.csls_knn)
        r_tgt = knn_mean_sims(Yn, Xw, cfg.csls_knn)
    fwd = np.empty(window, dtype=np.intp)
    bwd_best = np.full(window, -np.inf)
    bwd = np.zeros(window, dtype=np.intp)
    for lo in range(0, window, _BLOCK):
        hi = min(lo + _BLOCK, window)
        scores = Xw[lo:hi] @ Yn.T
        if cfg.retrieval == "csls":
            scores *= 2.0
            scores -= r_src[lo:hi, None]
            scores -= r_tgt[None, :]
        fwd[lo:hi] = np.argmax(scores, axis=1)
        col_best = scores.max(axis=0)
        improved = col_best > bwd_best
        bwd[improved] = lo + np.argmax(scores[:, improved], axis=0)
        bwd_best[improved] = col_best[improved]
    if cfg.mutual_only:
        pairs = [(i, int(j)) for i, j in enumerate(fwd) if bwd[j] == i]
    else:
        pairs = [(i, int(j)) for i, j in enumerate(fwd)]
    if not pairs:
        raise RuntimeError(
            "induced dictionary is empty; relax mutual_only or switch retrieval mode"
        )
    return pairs


def refine(
    X, Y, W0: OrthogonalMap, cfg: RefineConfig | None = None, *, return_stats: bool = False
):
    """Self-training refinement of an initial map.

    Each epoch induces a pseudo-dictionary inside a growing frequency window
    and replaces the map with the Procrustes optimum for those pairs.
    epochs=0 returns W0 unchanged. With return_stats, also returns the number
    of induced pairs per epoch.
    """
    cfg = cfg or RefineConfig()
    Xv = _vectors(X)
    Yv = _vectors(Y)
    W = W0
    pair_counts: list[int] = []
    for epoch in range(cfg.epochs):
        pairs = induce_dictionary(Xv, Yv, W, cfg, epoch)
        pair_counts.append(len(pairs))
        rows = np.fromiter((p[0] for p in pairs), dtype=np.intp, count=len(pairs))
        cols = np.fromiter((p[1] for p in pairs), dtype=np.intp, count=len(pairs))
        W = procrustes_closed_form(Xv[rows], Yv[cols])
    if return_stats:
        return W, pair_counts
    return W
