"""Joint estimation of an orthogonal map and a transport coupling between two
embedding clouds, with the transport step run on quantized distributions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .procrustes import OrthogonalMap, coupling_procrustes_update
from .quantize import QuantizeConfig, QuantizedDistribution, quantize
from .transport import (
    SinkhornConfig,
    TransportPlan,
    cost_matrix,
    exact_ot,
    sinkhorn,
    sinkhorn_unbalanced,
    transport_cost,
)

_SAMPLING_MODES = ("kmeanspp", "random")
_OT_MODES = ("balanced", "unbalanced")


@dataclass
class AlignConfig:
    epochs: int = 5
    iters_per_epoch: int = 200
    k: int = 2000
    train_vocab: int = 20_000
    init_vocab: int = 2500
    sampling: str = "kmeanspp"
    lloyd_steps: int = 0
    ot: str = "balanced"
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    fw_iters: int = 50
    lr0: float = 0.5
    requantize: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.iters_per_epoch < 1:
            raise ValueError(f"iters_per_epoch must be positive, got {self.iters_per_epoch}")
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.k > self.train_vocab:
            raise ValueError(f"k={self.k} exceeds train_vocab={self.train_vocab}")
        if self.init_vocab < 1 or self.init_vocab > self.train_vocab:
            raise ValueError(
                f"init_vocab must lie in [1, train_vocab], got {self.init_vocab}"
            )
        if self.sampling not in _SAMPLING_MODES:
            raise ValueError(f"sampling must be one of {_SAMPLING_MODES}, got {self.sampling!r}")
        if self.lloyd_steps not in (0, 1):
            raise ValueError(f"lloyd_steps must be 0 or 1, got {self.lloyd_steps}")
        if self.ot not in _OT_MODES:
            raise ValueError(f"ot must be one of {_OT_MODES}, got {self.ot!r}")
        if self.fw_iters < 0:
            raise ValueError(f"fw_iters must be >= 0, got {self.fw_iters}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")


@dataclass
class AlignTrace:
    """Per-iteration transport costs (grouped by epoch) and map diagnostics."""

    costs: list[float] = field(default_factory=list)
    epoch_of: list[int] = field(default_factory=list)
    ortho_errors: list[float] = field(default_factory=list)

    def record(self, epoch: int, cost: float, ortho_error: float) -> None:
        self.costs.append(cost)
        self.epoch_of.append(epoch)
        self.ortho_errors.append(ortho_error)

    def epoch_mean_costs(self) -> list[float]:
        means: list[float] = []
        costs = np.asarray(self.costs)
        epochs = np.asarray(self.epoch_of)
        for e in np.unique(epochs):
            means.append(float(costs[epochs == e].mean()))
        return means


def _vectors(X) -> np.ndarray:
    return np.asarray(getattr(X, "vectors", X), dtype=np.float64)


def convex_init(X: np.ndarray, Y: np.ndarray, iters: int = 30) -> OrthogonalMap:
    """Initial map from a convex relaxation over doubly stochastic couplings.

    Minimizes ||Kx P - P Ky||_F^2 (Kx, Ky the Gram matrices) by Frank-Wolfe:
    the linear minimization oracle over the Birkhoff polytope is the exact OT
    solve of the gradient matrix under uniform marginals, steps follow the
    2/(2+s) schedule from uniform P, and the best-objective iterate wins. The
    map is the Procrustes optimum for that coupling.
    """
    X = _vectors(X)
    Y = _vectors(Y)
    if X.shape != Y.shape:
        raise ValueError(f"head shapes differ: {X.shape} vs {Y.shape}")
    if iters < 0:
        raise ValueError(f"iters must be >= 0, got {iters}")
    n = X.shape[0]
    Kx = X @ X.T
    Ky = Y @ Y.T
    marginal = np.full(n, 1.0 / n)
    P = np.full((n, n), 1.0 / n)
    best_obj = np.inf
    best_P = P
    for s in range(iters):
        D = Kx @ P - P @ Ky
        obj = float(np.vdot(D, D))
        if obj < best_obj:
            best_obj = obj
            best_P = P.copy()
        G = 2.0 * (Kx @ D - D @ Ky)
        vertex = n * exact_ot(G, marginal, marginal, max_cells=n * n).matrix
        step = 2.0 / (2.0 + s)
        P = (1.0 - step) * P + step * vertex
    D = Kx @ P - P @ Ky
    if float(np.vdot(D, D)) < best_obj:
        best_P = P
    return coupling_procrustes_update(
        OrthogonalMap.identity(X.shape[1]), X, Y, best_P / n, mode="closed_form"
    )


def _draw_anchors(
    Z: np.ndarray, cfg: AlignConfig, rng: np.random.Generator
) -> QuantizedDistribution:
    if cfg.sampling == "kmeanspp":
        qcfg = QuantizeConfig(k=cfg.k, lloyd_steps=cfg.lloyd_steps)
        return quantize(Z, qcfg, rng)
    # random baseline: uniform subsample, uniform weights
    idx = rng.choice(Z.shape[0], size=cfg.k, replace=False)
    return QuantizedDistribution(Z[idx].copy(), np.full(cfg.k, 1.0 / cfg.k))


def quantized_wasserstein_plan(
    X: np.ndarray,
    Y: np.ndarray,
    W: OrthogonalMap,
    cfg: AlignConfig,
    rng: np.random.Generator,
    *,
    anchors: tuple[QuantizedDistribution, QuantizedDistribution] | None = None,
    warm: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[TransportPlan, QuantizedDistribution, QuantizedDistribution]:
    """Entropic plan between quantized X (mapped through W) and quantized Y.

    Anchors are drawn in the source coordinates and mapped by the current W
    when the cost matrix is formed, so a cached pair stays valid as W moves.
    """
    if anchors is None:
        qx = _draw_anchors(_vectors(X), cfg, rng)
        qy = _draw_anchors(_vectors(Y), cfg, rng)
    else:
        qx, qy = anchors
    C = cost_matrix(qx.centers @ W.matrix, qy.centers)
    solve = sinkhorn if cfg.ot == "balanced" else sinkhorn_unbalanced
    plan = solve(C, qx.weights, qy.weights, cfg.sinkhorn, warm=warm)
    return plan, qx, qy


def align(X, Y, cfg: AlignConfig | None = None, *, return_trace: bool = False):
    """Estimate the orthogonal map aligning X onto Y without supervision.

    Runs convex_init on the first init_vocab rows, then cfg.epochs epochs of
    cfg.iters_per_epoch alternating steps on the first train_vocab rows: solve
    entropic OT between the quantized clouds, then move W toward the Procrustes
    solution for that plan (gradient steps at rate lr0/(1+t), t the iteration
    index within the epoch; the last epoch applies the closed-form solution
    instead). Fresh anchors are drawn each epoch and cached across its
    iterations, or redrawn every iteration when cfg.requantize is set.

    Returns the map, or (map, AlignTrace) when return_trace is set.
    """
    cfg = cfg or AlignConfig()
    Xv = _vectors(X)
    Yv = _vectors(Y)
    if Xv.shape[1] != Yv.shape[1]:
        raise ValueError(f"dimension mismatch: {Xv.shape[1]} vs {Yv.shape[1]}")
    if Xv.shape[0] < cfg.train_vocab or Yv.shape[0] < cfg.train_vocab:
        raise ValueError(
            f"train_vocab={cfg.train_vocab} exceeds vocabulary sizes "
            f"({Xv.shape[0]}, {Yv.shape[0]})"
        )
    Xt = Xv[: cfg.train_vocab]
    Yt = Yv[: cfg.train_vocab]
    rng = np.random.default_rng(cfg.seed)
    W = convex_init(Xt[: cfg.init_vocab], Yt[: cfg.init_vocab], cfg.fw_iters)
    trace = AlignTrace()
    t_global = 0
    for epoch in range(cfg.epochs):
        anchors = None
        warm = None
        final_epoch = epoch == cfg.epochs - 1
        for t in range(cfg.iters_per_epoch):
            plan, qx, qy = quantized_wasserstein_plan(
                Xt, Yt, W, cfg, rng, anchors=anchors, warm=warm
            )
            if not cfg.requantize:
                anchors = (qx, qy)
                warm = plan.potentials
            cost = transport_cost(cost_matrix(qx.centers @ W.matrix, qy.centers), plan)
            if not np.isfinite(cost):
                raise RuntimeError(
                    f"non-finite transport cost at epoch {epoch + 1}, iteration {t_global + 1}"
                )
            mass = plan.total_mass
            if mass <= 0 or not np.isfinite(mass):
                raise RuntimeError(
                    f"degenerate plan mass {mass!r} at epoch {epoch + 1}, iteration {t_global + 1}"
                )
            P = plan.matrix / mass  # unbalanced plans carry mass != 1
            if final_epoch:
                W = coupling_procrustes_update(W, qx.centers, qy.centers, P, mode="closed_form")
            else:
                lr = cfg.lr0 / (1.0 + t)
                W = coupling_procrustes_update(W, qx.centers, qy.centers, P, lr=lr, mode="gradient")
            trace.record(epoch, cost, W.orthogonality_error())
            t_global += 1
    if return_trace:
        return W, trace
    return W
