"""Retrieval and bilingual-lexicon-induction scoring."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingMatrix, Lexicon
from .procrustes import OrthogonalMap

_RETRIEVAL_MODES = ("nn", "csls")
_BLOCK = 512


@dataclass
class EvalReport:
    """Precision@1 and capped mean reciprocal rank over scored queries.

    n_queries counts every source entry the evaluation attempted, scored or
    not; n_skipped counts those dropped for missing vocabulary.
    per_query_ranks holds the 1-based rank of the first gold hit per scored
    query (0 = no hit within the cap).
    """

    p_at_1: float
    map_mrr: float
    n_queries: int
    n_skipped: int
    retrieval: str
    per_query_ranks: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.p_at_1 <= 1.0 or not 0.0 <= self.map_mrr <= 1.0:
            raise ValueError("scores must lie in [0, 1]")
        if self.p_at_1 > self.map_mrr + 1e-12:
            raise ValueError(
                f"p_at_1={self.p_at_1} exceeds mrr={self.map_mrr}; rank accounting is broken"
            )
        if self.n_skipped > self.n_queries:
            raise ValueError("n_skipped exceeds n_queries")
        if self.retrieval not in _RETRIEVAL_MODES:
            raise ValueError(f"retrieval must be one of {_RETRIEVAL_MODES}")

    @property
    def mrr(self) -> float:
        return self.map_mrr

    def as_text(self) -> str:
        return (
            f"p_at_1={self.p_at_1:.6f}\n"
            f"mrr={self.map_mrr:.6f}\n"
            f"n_queries={self.n_queries}\n"
            f"n_skipped={self.n_skipped}\n"
            f"retrieval={self.retrieval}\n"
        )


def unit_rows(V: np.ndarray) -> np.ndarray:
    """Rows scaled to unit norm (zero rows left untouched)."""
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    return V / np.where(norms > 0, norms, 1.0)


def knn_mean_sims(A: np.ndarray, B: np.ndarray, knn: int, block: int = _BLOCK) -> np.ndarray:
    """Mean cosine of each row of A to its knn nearest rows of B (rows unit)."""
    if knn < 1:
        raise ValueError(f"knn must be positive, got {knn}")
    knn = min(knn, B.shape[0])
    out = np.empty(A.shape[0])
    for lo in range(0, A.shape[0], block):
        sims = A[lo : lo + block] @ B.T
        top = np.partition(sims, sims.shape[1] - knn, axis=1)[:, sims.shape[1] - knn :]
        out[lo : lo + block] = top.mean(axis=1)
    return out


def retrieve(
    query_rows: Sequence[int],
    src: EmbeddingMatrix,
    tgt: EmbeddingMatrix,
    W: OrthogonalMap,
    method: str = "csls",
    top_k: int = 10,
    csls_knn: int = 10,
) -> np.ndarray:
    """Ranked target indices (queries x top_k) for mapped source rows.

    method='nn' ranks by cosine; method='csls' by 2*cos(xW, y) minus the mean
    top-csls_knn cosine of the query among targets and of the target among all
    mapped sources. Ties break toward the lower target index.
    """
    if method not in _RETRIEVAL_MODES:
        raise ValueError(f"method must be one of {_RETRIEVAL_MODES}, got {method!r}")
    if top_k < 1:
        raise ValueError(f"top_k must be positive, got {top_k}")
    rows = np.asarray(query_rows, dtype=np.intp)
    if rows.size == 0:
        return np.empty((0, 0), dtype=np.intp)
    if rows.min() < 0 or rows.max() >= len(src):
        raise IndexError("query row out of range")
    Xw = unit_rows(src.vectors @ W.matrix)
    Yn = unit_rows(tgt.vectors)
    top_k = min(top_k, Yn.shape[0])
    Q = Xw[rows]
    r_tgt = knn_mean_sims(Yn, Xw, csls_knn) if method == "csls" else None
    out = np.empty((rows.size, top_k), dtype=np.intp)
    for lo in range(0, rows.size, _BLOCK):
        scores = Q[lo : lo + _BLOCK] @ Yn.T
        if method == "csls":
            knn = min(csls_knn, Yn.shape[0])
            r_q = np.partition(scores, scores.shape[1] - knn, axis=1)[
                :, scores.shape[1] - knn :
            ].mean(axis=1)
            scores = 2.0 * scores - r_q[:, None] - r_tgt[None, :]
        order = np.argsort(-scores, axis=1, kind="stable")
        out[lo : lo + _BLOCK] = order[:, :top_k]
    return out


def score(
    ranked: Mapping[str, Sequence[str]],
    gold: Lexicon,
    cap: int = 10,
    *,
    n_skipped: int = 0,
    retrieval: str = "nn",
) -> EvalReport:
    """Score ranked retrievals against a gold lexicon.

    A query counts as correct at rank r if any gold translation appears at
    position r; ranks beyond cap contribute 0 to the reciprocal-rank mean.
    Every key of ranked must appear in the lexicon.
    """
    if cap < 1:
        raise ValueError(f"cap must be positive, got {cap}")
    ranks: list[int] = []
    for q, candidates in ranked.items():
        if q not in gold.pairs:
            raise ValueError(f"query {q!r} has no gold entry")
        golds = gold.pairs[q]
        rank = 0
        for pos, cand in enumerate(candidates[:cap], start=1):
            if cand in golds:
                rank = pos
                break
        ranks.append(rank)
    n_scored = len(ranks)
    if n_scored:
        arr = np.asarray(ranks)
        p1 = float((arr == 1).mean())
        mrr = float(np.where(arr > 0, 1.0 / np.maximum(arr, 1), 0.0).mean())
    else:
        p1 = mrr = 0.0
    return EvalReport(
        p_at_1=p1,
        map_mrr=mrr,
        n_queries=n_scored + n_skipped,
        n_skipped=n_skipped,
        retrieval=retrieval,
        per_query_ranks=ranks,
    )


def evaluate(
    src: EmbeddingMatrix,
    tgt: EmbeddingMatrix,
    W: OrthogonalMap,
    lexicon: Lexicon,
    method: str = "csls",
    cap: int = 10,
    csls_knn: int = 10,
) -> EvalReport:
    """End-to-end scoring of a map against a lexicon.

    Lexicon entries whose source token is missing from src, or with no gold
    translation present in tgt, are skipped (counted in n_skipped together
    with the sources already dropped at lexicon load).
    """
    src_index = src.index
    tgt_index = tgt.index
    queries: list[str] = []
    for s, tgts in lexicon.pairs.items():
        if s in src_index and any(t in tgt_index for t in tgts):
            queries.append(s)
    n_skipped = lexicon.n_sources_skipped + (len(lexicon.pairs) - len(queries))
    if not queries:
        return EvalReport(0.0, 0.0, n_skipped, n_skipped, method, [])
    rows = [src_index[s] for s in queries]
    topk = retrieve(rows, src, tgt, W, method=method, top_k=cap, csls_knn=csls_knn)
    ranked = {s: [tgt.vocab[j] for j in topk[qi]] for qi, s in enumerate(queries)}
    return score(ranked, lexicon, cap, n_skipped=n_skipped, retrieval=method)
