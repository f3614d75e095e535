"""Orthogonal maps and Procrustes updates."""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field

import numpy as np

ORTHOGONAL_TOL = 1e-6


@dataclass
class OrthogonalMap:
    """A square matrix within ORTHOGONAL_TOL of the orthogonal group.

    Either rotation or reflection (no determinant-sign constraint). Pass
    validate=False to wrap a matrix known (or allowed) to be off-manifold,
    e.g. one loaded from disk that already triggered a warning.
    """

    matrix: np.ndarray = field(repr=False)
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError(f"map must be square, got shape {self.matrix.shape}")
        if not np.isfinite(self.matrix).all():
            raise ValueError("map contains non-finite values")
        if validate:
            err = self.orthogonality_error()
            if err > ORTHOGONAL_TOL:
                raise ValueError(
                    f"matrix is not orthogonal: ||W^T W - I||_F = {err:.3e} > {ORTHOGONAL_TOL}"
                )

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def orthogonality_error(self) -> float:
        d = self.matrix.shape[0]
        return float(np.linalg.norm(self.matrix.T @ self.matrix - np.eye(d)))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Map row vectors: X @ W."""
        return np.asarray(X, dtype=np.float64) @ self.matrix

    @classmethod
    def identity(cls, d: int) -> "OrthogonalMap":
        return cls(np.eye(d))


def project_orthogonal(M: np.ndarray) -> OrthogonalMap:
    """Nearest orthogonal matrix in Frobenius norm: U V^T from the SVD of M."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix must be square, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise ValueError("matrix contains non-finite values")
    U, _, Vt = np.linalg.svd(M)
    return OrthogonalMap(U @ Vt)


def procrustes_closed_form(
    X: np.ndarray, Y: np.ndarray, row_weights: np.ndarray | None = None
) -> OrthogonalMap:
    """argmin_W ||diag(sqrt(w)) (X W - Y)||_F over orthogonal W.

    The minimizer is U V^T from the SVD of X^T diag(w) Y. Unweighted when
    row_weights is None.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape != Y.shape:
        raise ValueError(f"paired point sets must share shape, got {X.shape} and {Y.shape}")
    if X.shape[0] < 1:
        raise ValueError("need at least one row pair")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise ValueError("point sets contain non-finite values")
    if row_weights is not None:
        w = np.asarray(row_weights, dtype=np.float64)
        if w.shape != (X.shape[0],):
            raise ValueError(f"row_weights shape {w.shape} does not match {X.shape[0]} rows")
        if (w < 0).any():
            raise ValueError("row_weights must be nonnegative")
        M = X.T @ (Y * w[:, None])
    else:
        M = X.T @ Y
    return project_orthogonal(M)


def coupling_procrustes_update(
    W: OrthogonalMap,
    Cx: np.ndarray,
    Cy: np.ndarray,
    plan,
    lr: float = 0.5,
    mode: str = "gradient",
) -> OrthogonalMap:
    """Update W against a transport plan P coupling rows of Cx to rows of Cy.

    mode='gradient' takes a step of size lr along Cx^T P Cy (the ascent
    direction of <X W, P Y>) and reprojects onto the orthogonal group;
    mode='closed_form' jumps straight to the Procrustes optimum for P.
    """
    P = np.asarray(getattr(plan, "matrix", plan), dtype=np.float64)
    Cx = np.asarray(Cx, dtype=np.float64)
    Cy = np.asarray(Cy, dtype=np.float64)
    if P.shape != (Cx.shape[0], Cy.shape[0]):
        raise ValueError(
            f"plan shape {P.shape} does not couple {Cx.shape[0]} x {Cy.shape[0]} points"
        )
    if Cx.shape[1] != Cy.shape[1] or Cx.shape[1] != W.dim:
        raise ValueError("point dimensions do not match the map")
    total = float(P.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"plan has total mass {total!r}, expected 1")
    G = Cx.T @ (P @ Cy)
    if not np.isfinite(G).all():
        raise ValueError("coupling gradient contains non-finite values")
    if mode == "gradient":
        if lr < 0:
            raise ValueError(f"lr must be nonnegative, got {lr}")
        return project_orthogonal(W.matrix + lr * G)
    if mode == "closed_form":
        return project_orthogonal(G)
    raise ValueError(f"unknown mode {mode!r} (expected 'gradient' or 'closed_form')")
