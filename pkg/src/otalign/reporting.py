"""Run manifests, delimited outputs, and diagnostic figures."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def write_manifest(
    path: str | Path,
    command: str,
    config: Mapping[str, object],
    inputs: Mapping[str, str | Path] = (),
    outputs: Mapping[str, str | Path] = (),
    timings: Mapping[str, float] = (),
) -> None:
    """Write a key=value manifest: command, config, input/output digests, timings."""
    lines = [f"command={command}"]
    for key in sorted(config):
        lines.append(f"config.{key}={_fmt(config[key])}")
    for label, p in dict(inputs).items():
        lines.append(f"input.{label}.path={p}")
        lines.append(f"input.{label}.sha256={file_digest(p)}")
    for label, p in dict(outputs).items():
        lines.append(f"output.{label}.path={p}")
        lines.append(f"output.{label}.sha256={file_digest(p)}")
    for label in sorted(dict(timings)):
        lines.append(f"timing.{label}_s={dict(timings)[label]:.3f}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            key, _, value = line.partition("=")
            out[key] = value
    return out


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def save_cost_trace_figure(costs, epoch_of, path: str | Path) -> None:
    """Transport cost per iteration, with epoch boundaries marked."""
    costs = np.asarray(costs, dtype=float)
    epoch_of = np.asarray(epoch_of)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(np.arange(costs.size), costs, lw=1.0)
    for boundary in np.flatnonzero(np.diff(epoch_of)) + 1:
        ax.axvline(boundary, color="gray", lw=0.6, ls="--")
    ax.set_xlabel("iteration")
    ax.set_ylabel("transport cost")
    ax.set_title("quantized transport cost per iteration")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_rank_histogram(ranks, cap: int, path: str | Path) -> None:
    """Distribution of gold-hit ranks; the rightmost bar counts misses."""
    ranks = np.asarray(ranks)
    counts = [int((ranks == r).sum()) for r in range(1, cap + 1)]
    misses = int((ranks == 0).sum())
    labels = [str(r) for r in range(1, cap + 1)] + [f">{cap}"]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(np.arange(cap + 1), counts + [misses], color=["C0"] * cap + ["C3"])
    ax.set_xticks(np.arange(cap + 1), labels)
    ax.set_xlabel("rank of first gold hit")
    ax.set_ylabel("queries")
    ax.set_title("retrieval rank distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_estimator_comparison(
    quantized_errors, random_errors, path: str | Path
) -> None:
    """Per-trial absolute estimation errors of the two support samplers."""
    q = np.abs(np.asarray(quantized_errors, dtype=float))
    r = np.abs(np.asarray(random_errors, dtype=float))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    ax1.boxplot([q, r], tick_labels=["kmeans++", "random"])
    ax1.set_ylabel("|estimated - exact| transport cost")
    ax1.set_title("estimation error by sampler")
    lim = max(q.max(), r.max()) * 1.05 if q.size else 1.0
    ax2.scatter(r, q, s=12, alpha=0.7)
    ax2.plot([0, lim], [0, lim], color="gray", lw=0.8)
    ax2.set_xlabel("random subsample error")
    ax2.set_ylabel("kmeans++ error")
    ax2.set_title("paired trials (below diagonal: kmeans++ wins)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
