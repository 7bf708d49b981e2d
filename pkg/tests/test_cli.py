import numpy as np
from click.testing import CliRunner

from ascs.cli import main
from ascs.dataio import iter_libsvm
from ascs.sketch import CountSketch


def run_cli(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def simulate_dataset(tmp_path, dim=30, samples=400, alpha=0.02, seed=5):
    stream = tmp_path / "stream.libsvm"
    truth = tmp_path / "truth.csv"
    result = run_cli(
        "simulate", "--dim", dim, "--samples", samples, "--alpha", alpha,
        "--seed", seed, "--out", stream, "--truth", truth,
    )
    assert result.exit_code == 0, result.output
    return stream, truth


def test_simulate_writes_parseable_stream(tmp_path):
    stream, truth = simulate_dataset(tmp_path)
    rows = list(iter_libsvm(stream))
    assert len(rows) == 400
    assert rows[0][0].max() == 29
    lines = truth.read_text().strip().splitlines()
    assert lines[0] == "a,b,value"
    assert len(lines) == 1 + round(0.02 * 30 * 29 / 2)


def test_sketch_topk_eval_pipeline(tmp_path):
    stream, truth = simulate_dataset(tmp_path)
    snap = tmp_path / "run.bin"
    result = run_cli(
        "sketch", stream, "--dim", 30, "--samples", 400, "--k", 3, "--r", 150,
        "--alpha", 0.02, "--seed", 9, "--out", snap,
    )
    assert result.exit_code == 0, result.output
    assert snap.exists()
    manifest = snap.with_name("run.bin.manifest.json")
    assert manifest.exists()
    back = CountSketch.load(snap)
    assert back.samples_seen == 400

    top_csv = tmp_path / "top.csv"
    result = run_cli("topk", snap, "-k", 10, "--out", top_csv)
    assert result.exit_code == 0, result.output
    lines = top_csv.read_text().strip().splitlines()
    assert lines[0] == "a,b,estimate"
    assert len(lines) == 11

    eval_csv = tmp_path / "eval.csv"
    result = run_cli(
        "eval", stream, snap, "--fractions", "0.5,1.0", "--out", eval_csv
    )
    assert result.exit_code == 0, result.output
    lines = eval_csv.read_text().strip().splitlines()
    assert lines[0] == "metric,arg,value,seed"
    assert sum(1 for ln in lines if ln.startswith("mean_top_correlation")) == 2
    assert sum(1 for ln in lines if ln.startswith("max_f1")) == 1


def test_identical_seeds_byte_identical_outputs(tmp_path):
    stream, _ = simulate_dataset(tmp_path)
    outputs = []
    for run in ("a", "b"):
        snap = tmp_path / f"{run}.bin"
        top = tmp_path / f"{run}.csv"
        result = run_cli(
            "sketch", stream, "--dim", 30, "--samples", 400, "--k", 3,
            "--r", 150, "--alpha", 0.02, "--seed", 11, "--out", snap,
        )
        assert result.exit_code == 0, result.output
        result = run_cli("topk", snap, "-k", 25, "--out", top)
        assert result.exit_code == 0, result.output
        outputs.append((snap.read_bytes(), top.read_bytes()))
    assert outputs[0] == outputs[1]


def test_engine_switch_changes_result(tmp_path):
    stream, _ = simulate_dataset(tmp_path)
    tables = {}
    for engine in ("cs", "ascs"):
        snap = tmp_path / f"{engine}.bin"
        result = run_cli(
            "sketch", stream, "--dim", 30, "--samples", 400, "--k", 3,
            "--r", 150, "--alpha", 0.02, "--seed", 11, "--engine", engine,
            "--out", snap,
        )
        assert result.exit_code == 0, result.output
        tables[engine] = CountSketch.load(snap).table
    assert not np.array_equal(tables["cs"], tables["ascs"])


def test_hyper_table_and_csv(tmp_path):
    result = run_cli(
        "hyper", "--dim", 200, "--samples", 1000, "--k", 5, "--r", 995,
        "--alpha", 0.005, "--u", 0.5,
    )
    assert result.exit_code == 0, result.output
    assert "saturation_probability" in result.output
    assert "exploration_end" in result.output
    csv_path = tmp_path / "hyper.csv"
    result = run_cli(
        "hyper", "--dim", 200, "--samples", 1000, "--k", 5, "--r", 995,
        "--alpha", 0.005, "--u", 0.5, "--csv", csv_path,
    )
    assert result.exit_code == 0
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == 2


def test_hyper_infeasible_budget_exits_4():
    # delta below the saturation probability of this crowded geometry
    result = run_cli(
        "hyper", "--dim", 200, "--samples", 1000, "--k", 5, "--r", 995,
        "--alpha", 0.005, "--u", 0.5, "--delta", 0.05,
    )
    assert result.exit_code == 4
    assert "saturation" in result.output


def test_config_errors_exit_2(tmp_path):
    stream, _ = simulate_dataset(tmp_path)
    result = run_cli(
        "sketch", stream, "--dim", 30, "--samples", 400, "--out", tmp_path / "x.bin"
    )
    assert result.exit_code == 2  # neither --r nor --budget
    result = run_cli(
        "hyper", "--samples", 100, "--alpha", 0.1, "--u", 0.5, "--r", 10
    )
    assert result.exit_code == 2  # neither --pairs nor --dim


def test_missing_dataset_exits_5(tmp_path):
    result = run_cli(
        "sketch", tmp_path / "missing.libsvm", "--dim", 10, "--samples", 10,
        "--r", 50, "--out", tmp_path / "x.bin",
    )
    assert result.exit_code == 5


def test_malformed_dataset_exits_3(tmp_path):
    bad = tmp_path / "bad.libsvm"
    bad.write_text("1 junk\n", encoding="utf-8")
    result = run_cli(
        "sketch", bad, "--dim", 10, "--samples", 1, "--r", 50,
        "--out", tmp_path / "x.bin",
    )
    assert result.exit_code == 3


def test_validate_small_run(tmp_path):
    out = tmp_path / "miss.csv"
    snr = tmp_path / "snr.csv"
    result = run_cli(
        "validate", "--dim", 16, "--samples", 240, "--alpha", 0.05,
        "--k", 2, "--r", 120, "--replicates", 2, "--deltas", "0.2",
        "--targets", "0.3", "--seed", 3, "--out", out,
        "--snr-out", snr, "--snr-replicates", 1,
    )
    assert result.exit_code == 0, result.output
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "event,target,observed,within,solved,seed"
    assert len(lines) == 3
    assert snr.read_text().startswith("t,empirical_snr,lower_bound,above,seed")


def test_shuffle_option_changes_stream_order(tmp_path):
    stream, _ = simulate_dataset(tmp_path)
    tables = {}
    for label, extra in {"plain": [], "shuffled": ["--shuffle-capacity", 64]}.items():
        snap = tmp_path / f"{label}.bin"
        result = run_cli(
            "sketch", stream, "--dim", 30, "--samples", 400, "--k", 3,
            "--r", 150, "--alpha", 0.02, "--seed", 2, "--out", snap, *extra,
        )
        assert result.exit_code == 0, result.output
        tables[label] = CountSketch.load(snap).table
    assert not np.array_equal(tables["plain"], tables["shuffled"])
