"""End-to-end tests of the command-line interface (in-process via main())."""

import subprocess
import sys

import numpy as np
import numpy.testing as npt
import pytest

from helpers import write_lexicon, write_vec
from otalign.align import convex_init
from otalign.cli import build_parser, main
from otalign.embeddings import load_embeddings, load_map, save_map
from otalign.preprocess import normalize
from otalign.reporting import file_digest, read_manifest
from otalign.synthetic import planted_pair, random_orthogonal


@pytest.fixture
def planted_files(tmp_path):
    """A small planted pair written out as .vec files plus its gold dictionary."""
    pp = planted_pair(300, 8, noise=0.02, window=40, seed=0)
    src = write_vec(tmp_path / "src.vec", pp.src.vocab, pp.src.vectors)
    tgt = write_vec(tmp_path / "tgt.vec", pp.tgt.vocab, pp.tgt.vectors)
    lex = write_lexicon(
        tmp_path / "dict.txt",
        [(s, next(iter(ts))) for s, ts in pp.lexicon.pairs.items()],
    )
    return pp, src, tgt, lex


@pytest.fixture
def twin_files(tmp_path):
    """Identical clouds under different vocabularies: the identity map is perfect."""
    rng = np.random.default_rng(3)
    V = rng.normal(size=(40, 5))
    src = write_vec(tmp_path / "a.vec", [f"s{i}" for i in range(40)], V)
    tgt = write_vec(tmp_path / "b.vec", [f"t{i}" for i in range(40)], V)
    lex = write_lexicon(tmp_path / "d.txt", [(f"s{i}", f"t{i}") for i in range(40)])
    map_path = tmp_path / "id.map"
    save_map(np.eye(5), map_path)
    return src, tgt, lex, map_path


def small_align_argv(src, tgt, out, **extra):
    argv = [
        "align",
        "--src", str(src),
        "--tgt", str(tgt),
        "--out", str(out),
        "--epochs", "2",
        "--iters", "5",
        "--k", "40",
        "--train-vocab", "300",
        "--init-vocab", "100",
        "--fw-iters", "20",
        "--lloyd", "1",
        "--sinkhorn-tol", "1e-6",
        "--sinkhorn-iters", "500",
    ]
    for key, value in extra.items():
        argv += [f"--{key.replace('_', '-')}", str(value)]
    return argv


def stdout_pairs(capsys):
    out = capsys.readouterr().out
    return dict(
        line.partition("=")[::2] for line in out.splitlines() if "=" in line
    )


# -------------------------------------------------------------- exit codes


def test_version_flag_prints_and_exits_zero(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "otalign" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        [],  # missing subcommand
        ["frobnicate"],  # unknown subcommand
        ["align", "--src", "x.vec", "--tgt", "y.vec"],  # missing --out
        ["refine", "--src", "x.vec", "--tgt", "y.vec", "--out", "m"],  # no --map-in
        ["evaluate", "--src", "x.vec", "--tgt", "y.vec", "--map", "m"],  # no --dict
        ["align", "--src", "x", "--tgt", "y", "--out", "m", "--epochs", "-3"],
        ["align", "--src", "x", "--tgt", "y", "--out", "m", "--lloyd", "2"],
        ["bench-quantize", "--trials", "0"],
    ],
)
def test_flag_misuse_exits_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_inconsistent_config_values_exit_2(planted_files, capsys):
    _, src, tgt, _ = planted_files
    out = src.parent / "m.map"
    rc = main(small_align_argv(src, tgt, out, init_vocab=400))  # init > train
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_runtime_data_errors_exit_1(planted_files, tmp_path, capsys):
    _, src, tgt, _ = planted_files
    out = tmp_path / "m.map"
    # vocabulary smaller than the training window: caught mid-run
    rc = main(small_align_argv(src, tgt, out, train_vocab=400))
    assert rc == 1
    assert "error:" in capsys.readouterr().err
    # malformed embedding file: parse error with file:line prefix
    bad = tmp_path / "bad.vec"
    bad.write_text("not a header\n", encoding="utf-8")
    rc = main(small_align_argv(bad, tgt, out))
    assert rc == 1
    assert f"{bad}:1" in capsys.readouterr().err


# ------------------------------------------------------------------- align


def test_align_writes_map_trace_and_manifest(planted_files, tmp_path, capsys):
    _, src, tgt, _ = planted_files
    out = tmp_path / "learned.map"
    rc = main(small_align_argv(src, tgt, out))
    assert rc == 0
    kv = stdout_pairs(capsys)
    assert kv["map"] == str(out)
    assert "epoch_mean_cost.0" in kv and "epoch_mean_cost.1" in kv
    assert float(kv["orthogonality_error"]) <= 1e-6
    W = load_map(out)
    assert W.orthogonality_error() <= 1e-6
    manifest = read_manifest(tmp_path / "learned.map.manifest")
    assert manifest["command"].startswith("otalign align")
    assert manifest["config.epochs"] == "2"
    assert manifest["input.src.sha256"] == file_digest(src)
    assert manifest["output.map.sha256"] == file_digest(out)
    assert "timing.align_s" in manifest


def test_align_zero_epochs_saves_the_convex_warm_start(planted_files, tmp_path):
    _, src, tgt, _ = planted_files
    out = tmp_path / "warm.map"
    rc = main(small_align_argv(src, tgt, out, epochs=0))
    assert rc == 0
    src_n = normalize(load_embeddings(src))
    tgt_n = normalize(load_embeddings(tgt))
    expected = convex_init(src_n.vectors[:100], tgt_n.vectors[:100], iters=20)
    npt.assert_array_equal(load_map(out).matrix, expected.matrix)


def test_align_report_dir_artifacts(planted_files, tmp_path):
    _, src, tgt, _ = planted_files
    out = tmp_path / "m.map"
    report = tmp_path / "report"
    rc = main(small_align_argv(src, tgt, out) + ["--report-dir", str(report)])
    assert rc == 0
    trace = (report / "trace.csv").read_text().splitlines()
    assert trace[0] == "iteration,epoch,cost,ortho_error"
    assert len(trace) == 1 + 2 * 5
    png = (report / "cost_trace.png").read_bytes()
    assert png[:4] == b"\x89PNG" and len(png) > 1000
    assert (report / "manifest.txt").exists()


def test_align_parser_defaults_match_documented_contract():
    parser, _ = build_parser()
    args = parser.parse_args(["align", "--src", "s", "--tgt", "t", "--out", "m"])
    assert (args.epochs, args.iters, args.k) == (5, 200, 2000)
    assert (args.train_vocab, args.init_vocab) == (20_000, 2500)
    assert (args.sampling, args.lloyd_steps, args.ot) == ("kmeanspp", 0, "balanced")
    assert (args.epsilon, args.tau) == (0.05, 1.0)
    assert (args.sinkhorn_iters, args.sinkhorn_tol) == (5000, 1e-9)
    assert (args.fw_iters, args.lr0, args.seed) == (50, 0.5, 0)
    assert (args.max_vocab, args.threads) == (200_000, 1)
    assert args.requantize is False
    args = parser.parse_args(
        ["evaluate", "--src", "s", "--tgt", "t", "--map", "m", "--dict", "d"]
    )
    assert (args.retrieval, args.csls_knn, args.rank_cap) == ("csls", 10, 10)
    args = parser.parse_args(
        ["refine", "--src", "s", "--tgt", "t", "--map-in", "m", "--out", "o"]
    )
    assert args.epochs == 5
    assert args.schedule == (5000, 7500, 10000, 12500, 15000)
    args = parser.parse_args(["bench-quantize"])
    assert (args.n, args.d, args.k, args.trials) == (2000, 3, 32, 50)
    assert (args.components, args.spread, args.solver) == (5, 3.0, "exact")


# ------------------------------------------------------------------ config


def test_config_file_supplies_defaults_but_flags_win(planted_files, tmp_path):
    _, src, tgt, _ = planted_files
    out = tmp_path / "m.map"
    report = tmp_path / "rep"
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "# tuning\nepochs=1\niters=2\nsinkhorn-tol=1e-6\ntrain_vocab=300\n",
        encoding="utf-8",
    )
    argv = [
        "align",
        "--src", str(src),
        "--tgt", str(tgt),
        "--out", str(out),
        "--k", "40",
        "--init-vocab", "100",
        "--fw-iters", "10",
        "--epochs", "2",  # explicit flag beats the config value
        "--config", str(cfg),
        "--report-dir", str(report),
    ]
    assert main(argv) == 0
    rows = (report / "trace.csv").read_text().splitlines()
    assert len(rows) == 1 + 2 * 2  # epochs from the flag, iters from the config
    manifest = read_manifest(report / "manifest.txt")
    assert manifest["config.epochs"] == "2"
    assert manifest["config.iters_per_epoch"] == "2"


def test_config_file_unknown_key_exits_2(planted_files, tmp_path):
    _, src, tgt, _ = planted_files
    cfg = tmp_path / "run.cfg"
    cfg.write_text("frobnicate=1\n", encoding="utf-8")
    with pytest.raises(SystemExit) as exc:
        main(small_align_argv(src, tgt, tmp_path / "m.map") + ["--config", str(cfg)])
    assert exc.value.code == 2


def test_custom_manifest_path(planted_files, tmp_path):
    _, src, tgt, _ = planted_files
    manifest = tmp_path / "custom-manifest.txt"
    rc = main(
        small_align_argv(src, tgt, tmp_path / "m.map")
        + ["--manifest", str(manifest)]
    )
    assert rc == 0
    assert manifest.exists()
    assert not (tmp_path / "m.map.manifest").exists()


def test_align_runs_are_reproducible(planted_files, tmp_path):
    _, src, tgt, _ = planted_files
    out1 = tmp_path / "m1.map"
    out2 = tmp_path / "m2.map"
    assert main(small_align_argv(src, tgt, out1, seed=7)) == 0
    assert main(small_align_argv(src, tgt, out2, seed=7)) == 0
    assert out1.read_text() == out2.read_text()


# ------------------------------------------------------------------ refine


def test_refine_identity_dictionary_keeps_identity_map(twin_files, tmp_path, capsys):
    src, tgt, _, map_path = twin_files
    out = tmp_path / "refined.map"
    rc = main([
        "refine",
        "--src", str(src),
        "--tgt", str(tgt),
        "--map-in", str(map_path),
        "--out", str(out),
        "--epochs", "1",
        "--schedule", "40",
    ])
    assert rc == 0
    kv = stdout_pairs(capsys)
    assert kv["induced_pairs.0"] == "40"
    assert np.abs(load_map(out).matrix - np.eye(5)).max() <= 1e-9


def test_refine_zero_epochs_passes_the_map_through(twin_files, tmp_path):
    src, tgt, _, map_path = twin_files
    R = random_orthogonal(5, np.random.default_rng(1))
    save_map(R, map_path)
    out = tmp_path / "same.map"
    rc = main([
        "refine",
        "--src", str(src),
        "--tgt", str(tgt),
        "--map-in", str(map_path),
        "--out", str(out),
        "--epochs", "0",
        "--schedule", "40",
    ])
    assert rc == 0
    assert out.read_text() == map_path.read_text()


def test_refine_report_dir_artifacts(twin_files, tmp_path):
    src, tgt, _, map_path = twin_files
    report = tmp_path / "rep"
    rc = main([
        "refine",
        "--src", str(src),
        "--tgt", str(tgt),
        "--map-in", str(map_path),
        "--out", str(tmp_path / "r.map"),
        "--epochs", "2",
        "--schedule", "20,40",
        "--retrieval", "nn",
        "--no-mutual",
        "--report-dir", str(report),
    ])
    assert rc == 0
    rows = (report / "induced_pairs.csv").read_text().splitlines()
    assert rows[0] == "epoch,window,pairs"
    assert rows[1].startswith("0,20,") and rows[2].startswith("1,40,")
    manifest = read_manifest(report / "manifest.txt")
    assert manifest["config.mutual_only"] == "False"
    assert manifest["config.dict_vocab_schedule"] == "20,40"


# ---------------------------------------------------------------- evaluate


def test_evaluate_identity_map_scores_perfectly(twin_files, capsys):
    src, tgt, lex, map_path = twin_files
    rc = main([
        "evaluate",
        "--src", str(src),
        "--tgt", str(tgt),
        "--map", str(map_path),
        "--dict", str(lex),
        "--retrieval", "nn",
    ])
    assert rc == 0
    kv = stdout_pairs(capsys)
    assert kv["p_at_1"] == "1.000000"
    assert kv["mrr"] == "1.000000"
    assert kv["n_queries"] == "40"
    assert kv["n_skipped"] == "0"
    assert kv["retrieval"] == "nn"


def test_evaluate_warns_when_dictionary_is_out_of_vocabulary(twin_files, tmp_path, capsys):
    src, tgt, _, map_path = twin_files
    oov = write_lexicon(tmp_path / "oov.txt", [("nope", "nada"), ("zz", "t0")])
    rc = main([
        "evaluate",
        "--src", str(src),
        "--tgt", str(tgt),
        "--map", str(map_path),
        "--dict", str(oov),
    ])
    assert rc == 0
    captured = capsys.readouterr()
    assert "no in-vocabulary dictionary pairs" in captured.err
    assert "p_at_1=0.000000" in captured.out


def test_evaluate_report_dir_artifacts(twin_files, tmp_path):
    src, tgt, lex, map_path = twin_files
    report = tmp_path / "rep"
    rc = main([
        "evaluate",
        "--src", str(src),
        "--tgt", str(tgt),
        "--map", str(map_path),
        "--dict", str(lex),
        "--cap", "5",
        "--report-dir", str(report),
    ])
    assert rc == 0
    assert "p_at_1=1.000000" in (report / "report.txt").read_text()
    rows = (report / "ranks.csv").read_text().splitlines()
    assert rows[0] == "query_index,rank"
    assert len(rows) == 1 + 40
    png = (report / "rank_histogram.png").read_bytes()
    assert png[:4] == b"\x89PNG" and len(png) > 1000
    manifest = read_manifest(report / "manifest.txt")
    assert manifest["config.rank_cap"] == "5"
    assert manifest["input.lexicon.sha256"] == file_digest(lex)


# ----------------------------------------------------------- bench-quantize


def bench_argv(**extra):
    argv = ["bench-quantize", "--n", "80", "--d", "2", "--k", "8", "--trials", "2"]
    for key, value in extra.items():
        argv += [f"--{key.replace('_', '-')}", str(value)]
    return argv


def test_bench_quantize_reports_paired_errors(tmp_path, capsys):
    report = tmp_path / "rep"
    rc = main(bench_argv() + ["--report-dir", str(report)])
    assert rc == 0
    kv = stdout_pairs(capsys)
    assert kv["trials"] == "2"
    assert 0.0 <= float(kv["win_rate"]) <= 1.0
    assert float(kv["mean_abs_err_kmeanspp"]) >= 0.0
    rows = (report / "trials.csv").read_text().splitlines()
    assert rows[0] == "trial,exact_cost,kmeanspp_error,random_error,kmeanspp_win"
    assert len(rows) == 3
    png = (report / "estimator_comparison.png").read_bytes()
    assert png[:4] == b"\x89PNG" and len(png) > 1000


def test_bench_quantize_stdout_is_reproducible(capsys):
    assert main(bench_argv(seed=5)) == 0
    first = capsys.readouterr().out
    assert main(bench_argv(seed=5)) == 0
    assert capsys.readouterr().out == first


def test_bench_quantize_argument_interactions(capsys):
    rc = main(bench_argv(k=90))  # k exceeds n
    assert rc == 2
    capsys.readouterr()
    rc = main(bench_argv(n=3000))  # n beyond the exact-reference cap
    assert rc == 1
    assert "max-exact-n" in capsys.readouterr().err


# -------------------------------------------------------------- subprocess


def test_module_entrypoint_runs_in_a_subprocess(twin_files):
    src, tgt, lex, map_path = twin_files
    proc = subprocess.run(
        [
            sys.executable, "-m", "otalign.cli",
            "evaluate",
            "--src", str(src),
            "--tgt", str(tgt),
            "--map", str(map_path),
            "--dict", str(lex),
        ],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert "p_at_1=1.000000" in proc.stdout
