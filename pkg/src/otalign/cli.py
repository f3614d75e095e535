"""Command-line interface.

Subcommands: align (learn a map without supervision), refine (self-training
on an existing map), evaluate (score a map against a lexicon), bench-quantize
(compare quantized and random-subsample transport estimates against exact OT
on synthetic clouds).

Exit codes: 0 success, 1 data/solver errors, 2 flag misuse.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .align import AlignConfig, align
from .embeddings import ParseError, load_embeddings, load_lexicon, load_map, save_map
from .preprocess import normalize
from .quantize import QuantizeConfig, QuantizedDistribution, quantize
from .refine import RefineConfig, refine
from .scoring import evaluate
from .synthetic import gaussian_mixture
from .transport import SinkhornConfig, SolverError, cost_matrix, exact_ot, sinkhorn, transport_cost


class UsageError(Exception):
    """Inconsistent flag values discovered after parsing (exit code 2)."""


_RUNTIME_ERRORS = (ParseError, SolverError, OSError, RuntimeError, ValueError)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text!r}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(part) for part in text.split(",") if part)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--threads", type=_positive_int, default=1, help="BLAS thread cap (default 1)")
    sub.add_argument("--config", type=Path, default=None, help="key=value file of flag defaults")
    sub.add_argument("--manifest", type=Path, default=None, help="where to write the run manifest")
    sub.add_argument("--report-dir", type=Path, default=None, help="directory for CSV/figure/manifest outputs")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="otalign", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"otalign {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    p = subparsers.add_parser("align", help="learn an orthogonal map without supervision")
    p.add_argument("--src", type=Path, required=True, help="source embedding text file")
    p.add_argument("--tgt", type=Path, required=True, help="target embedding text file")
    p.add_argument("--out", dest="map_out", type=Path, required=True,
                   help="where to write the learned map")
    p.add_argument("--epochs", type=_nonneg_int, default=5)
    p.add_argument("--iters", type=_positive_int, default=200, help="iterations per epoch")
    p.add_argument("--k", type=_positive_int, default=2000, help="anchors per side")
    p.add_argument("--train-vocab", type=_positive_int, default=20_000)
    p.add_argument("--init-vocab", type=_positive_int, default=2500)
    p.add_argument("--sampling", choices=("kmeanspp", "random"), default="kmeanspp")
    p.add_argument("--lloyd", dest="lloyd_steps", type=int, choices=(0, 1), default=0)
    p.add_argument("--ot", choices=("balanced", "unbalanced"), default="balanced")
    p.add_argument("--epsilon", type=_positive_float, default=0.05)
    p.add_argument("--tau", type=_positive_float, default=1.0)
    p.add_argument("--sinkhorn-iters", type=_positive_int, default=5000)
    p.add_argument("--sinkhorn-tol", type=_positive_float, default=1e-9)
    p.add_argument("--fw-iters", type=_nonneg_int, default=50)
    p.add_argument("--lr0", type=_positive_float, default=0.5)
    p.add_argument("--requantize", action="store_true",
                   help="redraw anchors every iteration instead of caching per epoch")
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--max-vocab", type=_positive_int, default=200_000)
    _add_common(p)
    subs["align"] = p

    p = subparsers.add_parser("refine", help="self-training refinement of an existing map")
    p.add_argument("--src", type=Path, required=True)
    p.add_argument("--tgt", type=Path, required=True)
    p.add_argument("--map-in", type=Path, required=True)
    p.add_argument("--out", dest="map_out", type=Path, required=True)
    p.add_argument("--epochs", type=_nonneg_int, default=5)
    p.add_argument("--retrieval", choices=("nn", "csls"), default="csls")
    p.add_argument("--csls-knn", type=_positive_int, default=10)
    p.add_argument("--schedule", type=_int_list, default=(5000, 7500, 10000, 12500, 15000),
                   help="comma-separated vocabulary window per epoch")
    p.add_argument("--no-mutual", action="store_true", help="keep non-mutual pairs too")
    p.add_argument("--max-vocab", type=_positive_int, default=200_000)
    _add_common(p)
    subs["refine"] = p

    p = subparsers.add_parser("evaluate", help="score a map on bilingual lexicon induction")
    p.add_argument("--src", type=Path, required=True)
    p.add_argument("--tgt", type=Path, required=True)
    p.add_argument("--map", type=Path, required=True)
    p.add_argument("--dict", dest="lexicon", type=Path, required=True)
    p.add_argument("--retrieval", choices=("nn", "csls"), default="csls")
    p.add_argument("--csls-knn", type=_positive_int, default=10)
    p.add_argument("--cap", dest="rank_cap", type=_positive_int, default=10)
    p.add_argument("--max-vocab", type=_positive_int, default=200_000)
    _add_common(p)
    subs["evaluate"] = p

    p = subparsers.add_parser("bench-quantize", help="quantized vs random-subsample transport estimates")
    p.add_argument("--n", type=_positive_int, default=2000, help="points per cloud")
    p.add_argument("--d", type=_positive_int, default=3)
    p.add_argument("--k", type=_positive_int, default=32, help="support size of the estimates")
    p.add_argument("--trials", type=_positive_int, default=50)
    p.add_argument("--components", type=_positive_int, default=5)
    p.add_argument("--spread", type=_positive_float, default=3.0)
    p.add_argument("--lloyd", dest="lloyd_steps", type=_nonneg_int, default=0)
    p.add_argument("--solver", choices=("exact", "sinkhorn"), default="exact",
                   help="solver for the k-point estimates (the reference is always exact)")
    p.add_argument("--epsilon", type=_positive_float, default=0.05)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--max-exact-n", type=_positive_int, default=2500,
                   help="largest cloud the exact reference will accept")
    _add_common(p)
    subs["bench-quantize"] = p

    return parser, subs


def _read_config_file(path: Path) -> list[tuple[str, str]]:
    entries: list[tuple[str, str]] = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
        entries.append((key.strip(), value.strip()))
    return entries


def _merge_config(parser, subs, argv, args) -> argparse.Namespace:
    """Apply a --config file as subcommand defaults, then reparse (flags win)."""
    sub = subs[args.command]
    try:
        entries = _read_config_file(args.config)
    except (OSError, ValueError) as exc:
        sub.error(str(exc))
    actions = {}
    for a in sub._actions:
        if a.dest == "help":
            continue
        actions[a.dest] = a
        for opt in a.option_strings:
            actions[opt.lstrip("-").replace("-", "_")] = a
    overrides = {}
    for key, raw in entries:
        name = key.replace("-", "_")
        if name not in actions or name == "config":
            sub.error(f"unknown config key {key!r}")
        action = actions[name]
        if isinstance(action, argparse._StoreTrueAction):
            value: object = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                sub.error(f"config key {key!r}: {exc}")
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            sub.error(f"config key {key!r}: {value!r} not in {tuple(action.choices)}")
        overrides[action.dest] = value
    sub.set_defaults(**overrides)
    return parser.parse_args(argv)


def _flatten(config: dict, prefix: str = "") -> dict[str, object]:
    flat: dict[str, object] = {}
    for key, value in config.items():
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{prefix}{key}."))
        else:
            flat[f"{prefix}{key}"] = value
    return flat


def _manifest_path(args) -> Path | None:
    if args.manifest is not None:
        return args.manifest
    if args.report_dir is not None:
        return args.report_dir / "manifest.txt"
    out = getattr(args, "map_out", None)
    return Path(f"{out}.manifest") if out is not None else None


def _write_outputs(args, command_line, config, inputs, outputs, timings, figures=()):
    from . import reporting

    if args.report_dir is not None:
        args.report_dir.mkdir(parents=True, exist_ok=True)
        for fn in figures:
            fn(args.report_dir)
    manifest = _manifest_path(args)
    if manifest is not None:
        reporting.write_manifest(manifest, command_line, config, inputs, outputs, timings)


def cmd_align(args, command_line: str) -> int:
    t0 = time.perf_counter()
    src = normalize(load_embeddings(args.src, args.max_vocab))
    tgt = normalize(load_embeddings(args.tgt, args.max_vocab))
    t_load = time.perf_counter() - t0
    try:
        cfg = AlignConfig(
            epochs=args.epochs,
            iters_per_epoch=args.iters,
            k=args.k,
            train_vocab=args.train_vocab,
            init_vocab=args.init_vocab,
            sampling=args.sampling,
            lloyd_steps=args.lloyd_steps,
            ot=args.ot,
            sinkhorn=SinkhornConfig(
                epsilon=args.epsilon, max_iters=args.sinkhorn_iters, tol=args.sinkhorn_tol, tau=args.tau
            ),
            fw_iters=args.fw_iters,
            lr0=args.lr0,
            requantize=args.requantize,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    W, trace = align(src, tgt, cfg, return_trace=True)
    t_align = time.perf_counter() - t0
    save_map(W, args.map_out)
    epoch_means = trace.epoch_mean_costs()
    print(f"map={args.map_out}")
    for e, mean in enumerate(epoch_means):
        print(f"epoch_mean_cost.{e}={mean:.6f}")
    print(f"orthogonality_error={W.orthogonality_error():.3e}")

    def figures(report_dir: Path):
        from . import reporting

        reporting.write_csv(
            report_dir / "trace.csv",
            ("iteration", "epoch", "cost", "ortho_error"),
            (
                (i, trace.epoch_of[i], trace.costs[i], trace.ortho_errors[i])
                for i in range(len(trace.costs))
            ),
        )
        if trace.costs:
            reporting.save_cost_trace_figure(trace.costs, trace.epoch_of, report_dir / "cost_trace.png")

    _write_outputs(
        args,
        command_line,
        _flatten(asdict(cfg)),
        {"src": args.src, "tgt": args.tgt},
        {"map": args.map_out},
        {"load": t_load, "align": t_align},
        figures=[figures],
    )
    return 0


def cmd_refine(args, command_line: str) -> int:
    t0 = time.perf_counter()
    src = normalize(load_embeddings(args.src, args.max_vocab))
    tgt = normalize(load_embeddings(args.tgt, args.max_vocab))
    W0 = load_map(args.map_in)
    t_load = time.perf_counter() - t0
    try:
        cfg = RefineConfig(
            epochs=args.epochs,
            retrieval=args.retrieval,
            csls_knn=args.csls_knn,
            dict_vocab_schedule=args.schedule,
            mutual_only=not args.no_mutual,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    t0 = time.perf_counter()
    W, pair_counts = refine(src, tgt, W0, cfg, return_stats=True)
    t_refine = time.perf_counter() - t0
    save_map(W, args.map_out)
    print(f"map={args.map_out}")
    for e, count in enumerate(pair_counts):
        print(f"induced_pairs.{e}={count}")
    print(f"orthogonality_error={W.orthogonality_error():.3e}")

    def figures(report_dir: Path):
        from . import reporting

        reporting.write_csv(
            report_dir / "induced_pairs.csv",
            ("epoch", "window", "pairs"),
            ((e, cfg.dict_vocab_schedule[e], c) for e, c in enumerate(pair_counts)),
        )

    _write_outputs(
        args,
        command_line,
        _flatten(asdict(cfg)),
        {"src": args.src, "tgt": args.tgt, "map_in": args.map_in},
        {"map": args.map_out},
        {"load": t_load, "refine": t_refine},
        figures=[figures],
    )
    return 0


def cmd_evaluate(args, command_line: str) -> int:
    t0 = time.perf_counter()
    src = normalize(load_embeddings(args.src, args.max_vocab))
    tgt = normalize(load_embeddings(args.tgt, args.max_vocab))
    W = load_map(args.map)
    lexicon = load_lexicon(args.lexicon, src, tgt)
    t_load = time.perf_counter() - t0
    t0 = time.perf_counter()
    report = evaluate(
        src, tgt, W, lexicon, method=args.retrieval, cap=args.rank_cap, csls_knn=args.csls_knn
    )
    t_eval = time.perf_counter() - t0
    sys.stdout.write(report.as_text())
    if report.n_queries == report.n_skipped:
        print("warning: no in-vocabulary dictionary pairs; scores are zero", file=sys.stderr)

    def figures(report_dir: Path):
        from . import reporting

        (report_dir / "report.txt").write_text(report.as_text(), encoding="utf-8")
        reporting.write_csv(
            report_dir / "ranks.csv",
            ("query_index", "rank"),
            ((i, r) for i, r in enumerate(report.per_query_ranks)),
        )
        reporting.save_rank_histogram(
            report.per_query_ranks, args.rank_cap, report_dir / "rank_histogram.png"
        )

    _write_outputs(
        args,
        command_line,
        {
            "retrieval": args.retrieval,
            "csls_knn": args.csls_knn,
            "rank_cap": args.rank_cap,
            "max_vocab": args.max_vocab,
        },
        {"src": args.src, "tgt": args.tgt, "map": args.map, "lexicon": args.lexicon},
        {},
        {"load": t_load, "evaluate": t_eval},
        figures=[figures],
    )
    return 0


def cmd_bench_quantize(args, command_line: str) -> int:
    if args.n > args.max_exact_n:
        raise ValueError(
            f"--n {args.n} exceeds --max-exact-n {args.max_exact_n}; "
            "the exact reference would be too slow"
        )
    if args.k > args.n:
        raise UsageError(f"--k {args.k} exceeds --n {args.n}")
    uniform = np.full(args.n, 1.0 / args.n)
    scfg = SinkhornConfig(epsilon=args.epsilon)
    qcfg = QuantizeConfig(k=args.k, lloyd_steps=args.lloyd_steps)

    def estimate(qx, qy):
        C = cost_matrix(qx.centers, qy.centers)
        if args.solver == "exact":
            plan = exact_ot(C, qx.weights, qy.weights, max_cells=args.k * args.k)
        else:
            plan = sinkhorn(C, qx.weights, qy.weights, scfg)
        return transport_cost(C, plan)

    rows = []
    wins = 0
    t0 = time.perf_counter()
    for trial in range(args.trials):
        rng = np.random.default_rng([args.seed, trial])
        X = gaussian_mixture(args.n, args.d, args.components, args.spread, rng)
        Y = gaussian_mixture(args.n, args.d, args.components, args.spread, rng)
        C_full = cost_matrix(X, Y)
        exact_cost = transport_cost(
            C_full, exact_ot(C_full, uniform, uniform, max_cells=args.n * args.n)
        )
        qx = quantize(X, qcfg, rng)
        qy = quantize(Y, qcfg, rng)
        ridx = rng.choice(args.n, size=args.k, replace=False)
        cidx = rng.choice(args.n, size=args.k, replace=False)
        rx = QuantizedDistribution(X[ridx], np.full(args.k, 1.0 / args.k))
        ry = QuantizedDistribution(Y[cidx], np.full(args.k, 1.0 / args.k))
        q_err = estimate(qx, qy) - exact_cost
        r_err = estimate(rx, ry) - exact_cost
        win = abs(q_err) < abs(r_err)
        wins += int(win)
        rows.append((trial, exact_cost, q_err, r_err, int(win)))
        print(
            f"trial={trial} exact={exact_cost:.6f} kmeanspp_err={q_err:.6f} "
            f"random_err={r_err:.6f} win={int(win)}"
        )
    t_bench = time.perf_counter() - t0
    q_errs = np.array([r[2] for r in rows])
    r_errs = np.array([r[3] for r in rows])
    print(f"trials={args.trials}")
    print(f"win_rate={wins / args.trials:.4f}")
    print(f"mean_abs_err_kmeanspp={np.abs(q_errs).mean():.6f}")
    print(f"mean_abs_err_random={np.abs(r_errs).mean():.6f}")

    def figures(report_dir: Path):
        from . import reporting

        reporting.write_csv(
            report_dir / "trials.csv",
            ("trial", "exact_cost", "kmeanspp_error", "random_error", "kmeanspp_win"),
            rows,
        )
        reporting.save_estimator_comparison(q_errs, r_errs, report_dir / "estimator_comparison.png")

    _write_outputs(
        args,
        command_line,
        {
            "n": args.n,
            "d": args.d,
            "k": args.k,
            "trials": args.trials,
            "components": args.components,
            "spread": args.spread,
            "lloyd_steps": args.lloyd_steps,
            "solver": args.solver,
            "epsilon": args.epsilon,
            "seed": args.seed,
        },
        {},
        {},
        {"bench": t_bench},
        figures=[figures],
    )
    return 0


_COMMANDS = {
    "align": cmd_align,
    "refine": cmd_refine,
    "evaluate": cmd_evaluate,
    "bench-quantize": cmd_bench_quantize,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is not None:
        args = _merge_config(parser, subs, argv, args)
    command_line = "otalign " + " ".join(argv)
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            return _COMMANDS[args.command](args, command_line)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
