"""Unsupervised embedding-space alignment via quantized optimal transport."""

from __future__ import annotations

from .embeddings import EmbeddingMatrix, Lexicon, ParseError, load_embeddings, load_lexicon, load_map, save_map
from .preprocess import normalize
from .quantize import QuantizeConfig, QuantizedDistribution, quantize
from .transport import SinkhornConfig, SolverError, TransportPlan, cost_matrix, exact_ot, sinkhorn, sinkhorn_unbalanced, transport_cost
from .procrustes import OrthogonalMap, coupling_procrustes_update, procrustes_closed_form, project_orthogonal
from .align import AlignConfig, align, convex_init, quantized_wasserstein_plan
from .refine import RefineConfig, induce_dictionary, refine
from .scoring import EvalReport, evaluate, retrieve, score

__version__ = "0.1.0"

__all__ = [
    "AlignConfig",
    "EmbeddingMatrix",
    "EvalReport",
    "Lexicon",
    "OrthogonalMap",
    "ParseError",
    "QuantizeConfig",
    "QuantizedDistribution",
    "RefineConfig",
    "SinkhornConfig",
    "SolverError",
    "TransportPlan",
    "align",
    "convex_init",
    "cost_matrix",
    "coupling_procrustes_update",
    "evaluate",
    "exact_ot",
    "induce_dictionary",
    "load_embeddings",
    "load_lexicon",
    "load_map",
    "normalize",
    "procrustes_closed_form",
    "project_orthogonal",
    "quantize",
    "quantized_wasserstein_plan",
    "refine",
    "retrieve",
    "save_map",
    "score",
    "sinkhorn",
    "sinkhorn_unbalanced",
    "transport_cost",
]
