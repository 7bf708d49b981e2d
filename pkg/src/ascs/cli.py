"""Command-line surface: simulate, sketch, topk, hyper, eval, validate.

Exit codes: 2 configuration/usage, 3 bad data, 4 infeasible solver
inputs, 5 I/O failure.  All commands are deterministic given their
flags; outputs embed the seeds needed to replay them.
"""

from __future__ import annotations

import functools
import sys

import click
import numpy as np

from . import __version__
from . import bounds as hb
from .datagen import SyntheticSpec, generate
from .dataio import ShuffleBuffer, format_libsvm, iter_libsvm, scan_libsvm
from .errors import (
    AscsError,
    DataError,
    OracleUnavailableError,
    SolverInfeasibleError,
)
from .evaluate import (
    exact_matrix,
    max_f1,
    mean_top_correlation,
    miss_probability_sweep,
    pair_values,
    snr_experiment,
)
from .pipeline import PipelineConfig, read_manifest, run_pipeline, write_manifest
from .sketch import CountSketch
from .stream import PairIndexer

EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER, EXIT_IO = 2, 3, 4, 5


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _write_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if path == "-":
        click.echo(text, nl=False)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SolverInfeasibleError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_SOLVER)
        except (DataError, OracleUnavailableError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except AscsError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except ValueError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


@click.group()
@click.version_option(version=__version__, prog_name="ascs")
def main():
    """Streaming sparse covariance/correlation sketching."""


# -- simulate ----------------------------------------------------------------------


@main.command()
@click.option("--dim", type=int, required=True, help="feature dimension d")
@click.option("--samples", type=int, required=True, help="stream length T")
@click.option("--alpha", type=float, default=0.005, show_default=True)
@click.option("--signal-low", type=float, default=0.5, show_default=True)
@click.option("--signal-high", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, help="LIBSVM stream output path")
@click.option("--truth", required=True, help="sparse truth CSV output path")
@_exit_codes
def simulate(dim, samples, alpha, signal_low, signal_high, seed, out, truth):
    """Write a synthetic sparse-covariance Gaussian stream plus its truth."""
    spec = SyntheticSpec(dim, samples, alpha, signal_low, signal_high, seed)
    data = generate(spec)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        indices = np.arange(dim)
        for row in data.samples:
            fh.write(format_libsvm(indices, row, label=0) + "\n")
    rows = [
        [int(a), int(b), float(v)]
        for a, b, v in zip(data.signal_rows, data.signal_cols, data.signal_values)
    ]
    _write_csv(truth, ["a", "b", "value"], rows)
    click.echo(
        f"wrote {samples} samples (d={dim}, {len(rows)} signals, "
        f"{data.repair_iterations} repairs) to {out}"
    )


# -- sketch ----------------------------------------------------------------------


@main.command()
@click.argument("dataset")
@click.option("--dim", type=int, default=None, help="feature dimension (pre-scanned when omitted)")
@click.option("--samples", type=int, default=None, help="stream length T (pre-scanned when omitted)")
@click.option("--k", "tables", type=int, default=5, show_default=True, help="hash tables K")
@click.option("--r", "buckets", type=int, default=None, help="buckets per table R")
@click.option("--budget", type=int, default=None, help="total floats M; R = M / K")
@click.option("--mode", type=click.Choice(["cov", "corr"]), default="cov", show_default=True)
@click.option("--engine", type=click.Choice(["cs", "ascs"]), default="ascs", show_default=True)
@click.option("--alpha", type=float, default=0.005, show_default=True)
@click.option("--u", "signal_floor", type=float, default=None, help="signal floor (pilot-derived when omitted)")
@click.option("--sigma", type=float, default=None, help="noise sd (pilot-derived when omitted)")
@click.option("--tau0", type=float, default=None, help="initial threshold (default: 1e-4 corr, pilot 10%ile cov)")
@click.option("--delta", type=float, default=None)
@click.option("--delta-star", type=float, default=None)
@click.option("--pilot-frac", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--gate", type=click.Choice(["abs", "signed"]), default="abs", show_default=True)
@click.option("--adjustment", type=click.Choice(["on", "off"]), default="off", show_default=True)
@click.option("--fast-path", type=click.Choice(["on", "off"]), default="off", show_default=True)
@click.option("--shuffle-capacity", type=int, default=None)
@click.option("--out", required=True, help="sketch snapshot output path")
@click.option("--manifest", "manifest_path", default=None, help="manifest path (default: OUT.manifest.json)")
@_exit_codes
def sketch(dataset, dim, samples, tables, buckets, budget, mode, engine, alpha,
           signal_floor, sigma, tau0, delta, delta_star, pilot_frac, seed, gate,
           adjustment, fast_path, shuffle_capacity, out, manifest_path):
    """Stream a LIBSVM dataset into a sketch snapshot."""
    if dim is None or samples is None:
        count, scanned_dim = scan_libsvm(dataset)
        dim = dim or scanned_dim
        samples = samples or count
    config = PipelineConfig(
        dim=dim, total_samples=samples, tables=tables, buckets=buckets,
        memory_budget=budget, mode=mode, engine=engine, alpha=alpha,
        signal_floor=signal_floor, sigma=sigma, tau0=tau0, delta=delta,
        delta_star=delta_star, pilot_fraction=pilot_frac, seed=seed,
        gate_mode="absolute" if gate == "abs" else "signed",
        adjustment=adjustment == "on", fast_path=fast_path == "on",
    )
    source = iter_libsvm(dataset, dim=dim)
    if shuffle_capacity:
        source = ShuffleBuffer(shuffle_capacity, seed=seed).shuffle(source)
    result = run_pipeline(source, config)
    result.sketch.save(out)
    result.manifest["dataset"] = dataset
    result.manifest["shuffle_capacity"] = shuffle_capacity
    write_manifest(result.manifest, manifest_path or f"{out}.manifest.json")
    click.echo(
        f"sketched {result.manifest['samples_processed']} samples into {out} "
        f"(engine={engine}, T0={result.manifest['exploration_end']})"
    )


# -- topk ----------------------------------------------------------------------


@main.command()
@click.argument("snapshot")
@click.option("-k", "count", type=int, default=100, show_default=True)
@click.option("--dim", type=int, default=None, help="feature dimension (read from the manifest when omitted)")
@click.option("--out", required=True, help="CSV output path ('-' for stdout)")
@_exit_codes
def topk(snapshot, count, dim, out):
    """Largest estimated pairs from a sketch snapshot."""
    sk = CountSketch.load(snapshot)
    if dim is None:
        manifest = read_manifest(f"{snapshot}.manifest.json")
        dim = manifest["dim"]
    indexer = PairIndexer(dim)
    if indexer.pair_count > 10**8:
        raise OracleUnavailableError(
            f"{indexer.pair_count} pairs is too many to enumerate for topk"
        )
    sk.prepare(indexer.pair_count)
    pairs = sk.top_k(min(count, indexer.pair_count), np.arange(indexer.pair_count))
    rows = []
    for item, est in pairs:
        a, b = indexer.index_to_pair(item)
        rows.append([a, b, est])
    _write_csv(out, ["a", "b", "estimate"], rows)


# -- hyper ----------------------------------------------------------------------


@main.command()
@click.option("--pairs", "items", type=int, default=None, help="item count p")
@click.option("--dim", type=int, default=None, help="alternative to --pairs: p = d(d-1)/2")
@click.option("--samples", type=int, required=True)
@click.option("--k", "tables", type=int, default=5, show_default=True)
@click.option("--r", "buckets", type=int, default=None)
@click.option("--budget", type=int, default=None, help="total floats M; R = M / K")
@click.option("--alpha", type=float, required=True)
@click.option("--u", "signal_floor", type=float, required=True)
@click.option("--sigma", type=float, default=1.0, show_default=True)
@click.option("--tau0", type=float, default=1e-4, show_default=True)
@click.option("--delta", type=float, default=None, help="default: max(1.01*SP, 0.05)")
@click.option("--delta-star", type=float, default=None, help="default: delta + 0.15")
@click.option("--csv", "csv_out", default=None, help="write the table as CSV instead")
@_exit_codes
def hyper(items, dim, samples, tables, buckets, budget, alpha, signal_floor,
          sigma, tau0, delta, delta_star, csv_out):
    """Solve the exploration length and threshold slope for given constants."""
    if (items is None) == (dim is None):
        raise ValueError("give exactly one of --pairs / --dim")
    if items is None:
        items = dim * (dim - 1) // 2
    if (buckets is None) == (budget is None):
        raise ValueError("give exactly one of --r / --budget")
    if buckets is None:
        buckets = max(budget // tables, 1)
    params = hb.ProblemParams(
        items=items, total_samples=samples, signal_fraction=alpha,
        signal_floor=signal_floor, noise_sd=sigma, tables=tables, buckets=buckets,
    )
    sp = hb.saturation_prob(params)
    if delta is None:
        budget_obj = hb.default_budget(params)
    else:
        budget_obj = hb.MissBudget(
            delta, delta_star if delta_star is not None else delta + 0.15
        )
    solved = hb.solve_exploration_length(params, tau0, budget_obj.delta)
    slope = hb.solve_threshold_slope(
        params, tau0, solved.exploration_end, budget_obj.sampling_target
    )
    plateau = (
        hb.plain_snr(params) * (1.0 - budget_obj.delta_star) / sp
    )
    header = ["saturation_probability", "delta", "delta_star", "exploration_end",
              "slope", "tau0", "snr_plateau"]
    row = [sp, budget_obj.delta, budget_obj.delta_star, solved.exploration_end,
           slope.slope, tau0, plateau]
    if csv_out:
        _write_csv(csv_out, header, [row])
    else:
        width = max(len(h) for h in header)
        for name, value in zip(header, row):
            click.echo(f"{name:<{width}}  {_fmt(value)}")


# -- eval ----------------------------------------------------------------------


@main.command(name="eval")
@click.argument("dataset")
@click.argument("snapshot")
@click.option("--dim", type=int, default=None)
@click.option("--alpha", type=float, default=None, help="default: from the sketch manifest")
@click.option("--fractions", default="0.01,0.05,0.1,0.25,0.5,1.0", show_default=True)
@click.option("--top-n", type=int, default=None, help="ground-truth size for max-F1")
@click.option("--out", required=True)
@_exit_codes
def eval_cmd(dataset, snapshot, dim, alpha, fractions, top_n, out):
    """Score a sketch snapshot against the exact matrix of a dataset."""
    sk = CountSketch.load(snapshot)
    manifest = {}
    try:
        manifest = read_manifest(f"{snapshot}.manifest.json")
    except OSError:
        pass
    dim = dim or manifest.get("dim")
    if dim is None:
        raise ValueError("--dim is required when no manifest sits beside the snapshot")
    alpha = alpha if alpha is not None else manifest.get("alpha", {}).get("value")
    if alpha is None:
        raise ValueError("--alpha is required when no manifest sits beside the snapshot")
    rows_iter = iter_libsvm(dataset, dim=dim)
    dense = np.zeros((sk.total_samples, dim))
    n = 0
    for indices, values in rows_iter:
        if n >= sk.total_samples:
            raise DataError("dataset holds more samples than the sketch declared")
        dense[n, indices] = values
        n += 1
    dense = dense[:n]
    truth = pair_values(exact_matrix(dense, mode=sk.mode))
    indexer = PairIndexer(dim)
    sk.prepare(indexer.pair_count)
    estimates = sk.estimate_all(indexer.pair_count)
    seed = manifest.get("seed", "")
    rows = []
    for frac in _floats(fractions):
        value = mean_top_correlation(estimates, truth, frac, alpha)
        rows.append(["mean_top_correlation", frac, value, seed])
    n_truth = top_n or max(1, round(alpha * indexer.pair_count))
    rows.append(["max_f1", n_truth, max_f1(estimates, truth, n_truth), seed])
    _write_csv(out, ["metric", "arg", "value", "seed"], rows)


# -- validate ----------------------------------------------------------------------


@main.command()
@click.option("--dim", type=int, default=200, show_default=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--alpha", type=float, default=0.005, show_default=True)
@click.option("--signal-low", type=float, default=0.5, show_default=True)
@click.option("--signal-high", type=float, default=1.0, show_default=True)
@click.option("--k", "tables", type=int, default=5, show_default=True)
@click.option("--r", "buckets", type=int, default=None, help="default: p / 20")
@click.option("--replicates", type=int, default=300, show_default=True)
@click.option("--deltas", default="0.05,0.06,0.07,0.08,0.09,0.10", show_default=True)
@click.option("--targets", default="0.05,0.07,0.09,0.11,0.13,0.15", show_default=True)
@click.option("--tau0", type=float, default=1e-4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", required=True, help="miss-probability CSV path")
@click.option("--snr-out", default=None, help="also write the SNR curve CSV")
@click.option("--snr-replicates", type=int, default=3, show_default=True)
@_exit_codes
def validate(dim, samples, alpha, signal_low, signal_high, tables, buckets,
             replicates, deltas, targets, tau0, seed, out, snr_out, snr_replicates):
    """Monte-Carlo check that observed miss rates sit under their bounds."""
    spec = SyntheticSpec(dim, samples, alpha, signal_low, signal_high, seed)
    sweep = miss_probability_sweep(
        spec, _floats(deltas), _floats(targets), replicates,
        tables=tables, buckets_per_table=buckets, master_seed=seed, tau0=tau0,
    )
    rows = []
    for d, obs, t0 in zip(
        sweep.deltas, sweep.exploration_observed, sweep.exploration_lengths
    ):
        rows.append(["exploration_miss", d, obs, obs <= d, t0, seed])
    for tgt, obs, slope in zip(
        sweep.sampling_targets, sweep.sampling_observed, sweep.slopes
    ):
        rows.append(["sampling_miss", tgt, obs, obs <= tgt, slope, seed])
    _write_csv(out, ["event", "target", "observed", "within", "solved", "seed"], rows)
    click.echo(
        f"validated {replicates} replicates x {sweep.signals_per_replicate} signals"
    )
    if snr_out:
        curve = snr_experiment(
            spec, seed=seed, replicates=snr_replicates,
            tables=tables, buckets_per_table=buckets,
        )
        snr_rows = [
            [t, emp, low, emp >= low, seed]
            for t, emp, low in zip(curve.checkpoints, curve.empirical, curve.lower_bound)
        ]
        _write_csv(
            snr_out, ["t", "empirical_snr", "lower_bound", "above", "seed"], snr_rows
        )


if __name__ == "__main__":
    main()
