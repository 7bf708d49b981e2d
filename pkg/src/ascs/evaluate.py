"""Exact reference matrices, ranking metrics and the Monte-Carlo
validation harness for the gated sketch.

Metrics
-------
* ``mean_top_correlation`` -- average true |correlation| of the pairs the
  sketch ranks highest, at a chosen fraction of the expected signal count.
* ``max_f1`` -- best F1 over prediction-set sizes for recovering the
  top-n true pairs.
* ``measure_snr`` -- empirical inserted-signal to inserted-noise squared
  mass ratio at a given step, pooled over replicate traces.

Harness
-------
``miss_probability_sweep`` reproduces the bound-validation protocol on
synthetic data: for each miss budget it solves the exploration length
and threshold slope, replays the gated stream over many replicates and
reports the observed miss frequencies, which the theory upper-bounds.
The exploration length is solved from the Gaussian factor of the bound
with the single-table noise constant; the saturated event (signal
colliding with signal in every table) is excluded there because budgets
below the saturation floor are otherwise infeasible by construction,
while the observed frequencies keep counting every signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import bounds as hb
from ._replay import centered_stream, estimates_from, replay_window
from .active import ThresholdSchedule
from .datagen import SyntheticData, SyntheticSpec, generate, sample_stream
from .errors import OracleUnavailableError
from .hashing import HashFamily

#: refuse to build dense references with more pair entries than this
EXACT_PAIR_GUARD = 10**8

#: stream prefix length used for the data-driven noise-sd estimate
SIGMA_PREFIX = 100


@dataclass
class EvalReport:
    """Bundle of the paper-style metrics for one run."""

    mean_top_corr: dict[float, float]
    max_f1: dict[int, float]
    snr_curve: list[tuple[int, float, float]]
    miss_prob: dict[str, float]


# -- exact references -----------------------------------------------------------


def exact_matrix(dataset: np.ndarray, mode: str = "cov") -> np.ndarray:
    """Two-pass empirical covariance (or correlation) matrix of a (T, d) block."""
    dataset = np.asarray(dataset, dtype=np.float64)
    t, d = dataset.shape
    if d * (d - 1) // 2 > EXACT_PAIR_GUARD:
        raise OracleUnavailableError(
            f"{d * (d - 1) // 2} pair entries exceed the exact-reference guard"
        )
    centered = dataset - dataset.mean(axis=0)
    cov = centered.T @ centered / t
    if mode == "cov":
        return cov
    if mode != "corr":
        raise ValueError(f"mode must be 'cov' or 'corr', got {mode!r}")
    std = np.sqrt(np.diag(cov))
    safe = np.where(std == 0.0, 1.0, std)
    corr = cov / np.outer(safe, safe)
    corr[std == 0.0, :] = 0.0
    corr[:, std == 0.0] = 0.0
    np.fill_diagonal(corr, 1.0)
    return corr


def pair_values(matrix: np.ndarray) -> np.ndarray:
    """Upper-triangle entries of a symmetric matrix in pair-index order."""
    ia, ib = np.triu_indices(matrix.shape[0], k=1)
    return matrix[ia, ib]


# -- ranking metrics --------------------------------------------------------------


def _descending_order(estimates: np.ndarray) -> np.ndarray:
    """Indices sorted by estimate descending, ties toward lower index."""
    return np.argsort(-np.asarray(estimates, dtype=np.float64), kind="stable")


def mean_top_correlation(
    estimates: np.ndarray, true_values: np.ndarray, fraction: float, alpha: float
) -> float:
    """Mean |true value| over the round(fraction * alpha * p) pairs with the
    largest estimates."""
    p = len(true_values)
    n_top = round(fraction * alpha * p)
    if n_top < 1:
        raise ValueError(
            f"fraction {fraction} of alpha*p = {alpha * p:.3f} selects no pairs"
        )
    picked = _descending_order(estimates)[:n_top]
    return float(np.mean(np.abs(np.asarray(true_values)[picked])))


def max_f1(estimates: np.ndarray, true_values: np.ndarray, top_n: int) -> float:
    """Best F1 over prediction-set sizes m in [1, min(10 * top_n, p)].

    Ground truth is the top_n pairs by |true value|; the prediction of
    size m is the top-m pairs by (signed) estimate.
    """
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    true_values = np.asarray(true_values, dtype=np.float64)
    p = len(true_values)
    truth_idx = np.argsort(-np.abs(true_values), kind="stable")[:top_n]
    truth = np.zeros(p, dtype=bool)
    truth[truth_idx] = True
    order = _descending_order(estimates)
    m_cap = min(10 * top_n, p)
    hits = np.cumsum(truth[order[:m_cap]])
    m = np.arange(1, m_cap + 1)
    f1 = 2.0 * hits / (m + top_n)
    return float(f1.max())


def measure_snr(traces: list["RunTrace"], t: int) -> float:
    """Pooled inserted-signal / inserted-noise squared mass at sample t.

    Returns math.inf when no noise was inserted at that step in any trace.
    """
    sig = sum(tr.signal_mass[t - 1] for tr in traces)
    noise = sum(tr.noise_mass[t - 1] for tr in traces)
    if noise == 0.0:
        return math.inf
    return sig / noise


@dataclass
class RunTrace:
    """Per-step inserted squared mass, split by signal membership."""

    signal_mass: np.ndarray
    noise_mass: np.ndarray


# -- synthetic replicate plumbing ---------------------------------------------------


@dataclass
class _Replicate:
    data: SyntheticData
    dev: np.ndarray
    buckets: np.ndarray
    signs: np.ndarray
    ia: np.ndarray
    ib: np.ndarray
    signal_items: np.ndarray
    params: hb.ProblemParams


def _pair_items(dim: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    a = rows.astype(np.int64)
    b = cols.astype(np.int64)
    return a * dim - a * (a + 1) // 2 + (b - a - 1)


def _make_replicate(
    spec: SyntheticSpec,
    tables: int,
    buckets_per_table: int,
    data_seed: int,
    hash_seed: int,
    data: SyntheticData | None = None,
    samples: np.ndarray | None = None,
) -> _Replicate:
    if data is None:
        data = generate(replace(spec, seed=data_seed))
    if samples is None:
        samples = data.samples
    dev = centered_stream(samples)
    ia, ib = np.triu_indices(spec.dim, k=1)
    family = HashFamily(hash_seed, tables, buckets_per_table)
    bucket_mat = family.bucket_matrix(spec.pair_count)
    sign_mat = family.sign_matrix(spec.pair_count)
    sig_items = _pair_items(spec.dim, data.signal_rows, data.signal_cols)
    prefix = dev[: min(SIGMA_PREFIX, spec.total_samples)]
    sigma = hb.estimate_sigma(prefix[:, ia] * prefix[:, ib])
    params = hb.ProblemParams(
        items=spec.pair_count,
        total_samples=spec.total_samples,
        signal_fraction=spec.signal_fraction,
        signal_floor=float(data.signal_values.min()),
        noise_sd=sigma,
        tables=tables,
        buckets=buckets_per_table,
    )
    return _Replicate(data, dev, bucket_mat, sign_mat, ia, ib, sig_items, params)


def _seeds(master_seed: int, rep: int, n: int = 2) -> list[int]:
    state = np.random.SeedSequence([master_seed, rep]).generate_state(
        n, dtype=np.uint64
    )
    return [int(s) for s in state]


# -- miss-probability validation -----------------------------------------------------


@dataclass
class MissSweepResult:
    deltas: list[float]
    exploration_observed: list[float]
    exploration_lengths: list[int]
    sampling_targets: list[float]
    sampling_observed: list[float]
    slopes: list[float]
    replicates: int
    signals_per_replicate: int


def miss_probability_sweep(
    spec: SyntheticSpec,
    deltas: list[float],
    sampling_targets: list[float],
    replicates: int,
    tables: int = 5,
    buckets_per_table: int | None = None,
    master_seed: int = 0,
    tau0: float = 1e-4,
    min_exploration: int = hb.DEFAULT_MIN_EXPLORATION,
) -> MissSweepResult:
    """Observed miss frequencies for a sweep of exploration budgets
    (``deltas``, measured at the exploration end) and sampling budgets
    (``sampling_targets``, measured over the sampling period).

    The sampling sweep fixes the exploration length at the one solved for
    the smallest delta and reuses each replicate's exploration-phase
    sketch across threshold slopes.
    """
    if buckets_per_table is None:
        buckets_per_table = max(spec.pair_count // 20, 1)
    missed_expl = np.zeros(len(deltas), dtype=np.int64)
    missed_samp = np.zeros(len(sampling_targets), dtype=np.int64)
    passed_samp = np.zeros(len(sampling_targets), dtype=np.int64)
    t0_sum = np.zeros(len(deltas), dtype=np.int64)
    slope_sum = np.zeros(len(sampling_targets))
    n_signals = 0
    t_total = spec.total_samples

    for rep in range(replicates):
        data_seed, hash_seed = _seeds(master_seed, rep)
        r = _make_replicate(spec, tables, buckets_per_table, data_seed, hash_seed)
        n_signals = len(r.signal_items)
        t0_by_delta = [
            hb.solve_exploration_length(
                r.params,
                tau0,
                d,
                multi_table=False,
                include_saturation=False,
                min_exploration=min_exploration,
            ).exploration_end
            for d in deltas
        ]
        t0_sum += np.asarray(t0_by_delta)
        t0_ref = max(t0_by_delta) if t0_by_delta else hb.DEFAULT_MIN_EXPLORATION

        w = np.zeros((tables, buckets_per_table))
        cursor = 1
        for t0 in sorted(set(t0_by_delta) | {t0_ref}):
            replay_window(
                w, r.buckets, r.signs, r.dev, r.ia, r.ib,
                t_total, cursor, t0, explore_end=t_total,
            )
            cursor = t0 + 1
            est = estimates_from(w, r.buckets, r.signs, r.signal_items)
            for j, t0_j in enumerate(t0_by_delta):
                if t0_j == t0:
                    missed_expl[j] += int(np.sum(np.abs(est) < tau0))

        est_ref = estimates_from(w, r.buckets, r.signs, r.signal_items)
        passed = np.abs(est_ref) >= tau0
        for j, target in enumerate(sampling_targets):
            slope = hb.solve_threshold_slope(r.params, tau0, t0_ref, target).slope
            slope_sum[j] += slope
            w_run = w.copy()
            dip = np.zeros(len(r.signal_items), dtype=bool)
            replay_window(
                w_run, r.buckets, r.signs, r.dev, r.ia, r.ib,
                t_total, t0_ref + 1, t_total, explore_end=t0_ref,
                tau0=tau0, theta=slope,
                track_items=r.signal_items, track_dip=dip,
            )
            missed_samp[j] += int(np.sum(passed & dip))
            passed_samp[j] += int(np.sum(passed))

    denom = replicates * max(n_signals, 1)
    return MissSweepResult(
        deltas=list(deltas),
        exploration_observed=[m / denom for m in missed_expl],
        exploration_lengths=[int(round(s / replicates)) for s in t0_sum],
        sampling_targets=list(sampling_targets),
        sampling_observed=[
            (m / p if p else 0.0) for m, p in zip(missed_samp, passed_samp)
        ],
        slopes=[s / replicates for s in slope_sum],
        replicates=replicates,
        signals_per_replicate=n_signals,
    )


def validate_miss_probability(
    spec: SyntheticSpec,
    budget: hb.MissBudget,
    replicates: int,
    tables: int = 5,
    buckets_per_table: int | None = None,
    master_seed: int = 0,
    tau0: float = 1e-4,
) -> tuple[float, float]:
    """Observed (exploration-end, sampling-period) miss frequencies for one budget."""
    sweep = miss_probability_sweep(
        spec,
        deltas=[budget.delta],
        sampling_targets=[budget.sampling_target],
        replicates=replicates,
        tables=tables,
        buckets_per_table=buckets_per_table,
        master_seed=master_seed,
        tau0=tau0,
    )
    return sweep.exploration_observed[0], sweep.sampling_observed[0]


# -- SNR validation ---------------------------------------------------------------------


@dataclass
class SnrCurveResult:
    checkpoints: list[int]
    empirical: list[float]
    lower_bound: list[float]
    exploration_end: int
    slope: float
    traces: list[RunTrace]


def snr_experiment(
    spec: SyntheticSpec,
    seed: int = 0,
    replicates: int = 3,
    tables: int = 5,
    buckets_per_table: int | None = None,
    delta: float = 0.05,
    delta_star: float = 0.15,
    checkpoint_step: int = 200,
    min_exploration: int = hb.DEFAULT_MIN_EXPLORATION,
) -> SnrCurveResult:
    """Empirical gated-stream SNR along the run against its lower bound.

    The truth matrix is drawn once per experiment; replicates redraw the
    stream and the hashes.  Hyperparameters come from the solver with
    tau0 = 0, matching the bound's premise.
    """
    if buckets_per_table is None:
        buckets_per_table = max(spec.pair_count // 20, 1)
    t_total = spec.total_samples
    base_data_seed, _ = _seeds(seed, 0)
    base = _make_replicate(
        spec, tables, buckets_per_table, base_data_seed, hash_seed=1
    )
    params = base.params
    t0 = hb.solve_exploration_length(
        params, 0.0, delta,
        multi_table=False, include_saturation=False,
        min_exploration=min_exploration,
    ).exploration_end
    slope = hb.solve_threshold_slope(
        params, 0.0, t0, delta_star - delta
    ).slope
    schedule = ThresholdSchedule(0.0, slope, t0, t_total)

    signal_mask = np.zeros(spec.pair_count, dtype=bool)
    signal_mask[base.signal_items] = True
    traces: list[RunTrace] = []
    for rep in range(replicates):
        stream_seed, hash_seed = _seeds(seed, rep + 1)
        samples = sample_stream(base.data.covariance, t_total, stream_seed)
        r = _make_replicate(
            spec, tables, buckets_per_table, 0, hash_seed,
            data=base.data, samples=samples,
        )
        w = np.zeros((tables, buckets_per_table))
        snr_sig = np.zeros(t_total)
        snr_noise = np.zeros(t_total)
        replay_window(
            w, r.buckets, r.signs, r.dev, r.ia, r.ib,
            t_total, 1, t_total, explore_end=t0,
            tau0=0.0, theta=slope,
            signal_mask=signal_mask, snr_sig=snr_sig, snr_noise=snr_noise,
        )
        traces.append(RunTrace(snr_sig, snr_noise))

    checkpoints = list(range(t0 + checkpoint_step, t_total + 1, checkpoint_step))
    if not checkpoints or checkpoints[-1] != t_total:
        checkpoints.append(t_total)
    empirical = [measure_snr(traces, t) for t in checkpoints]
    lower = [
        hb.active_snr_lower_bound(params, schedule, t, delta_star)
        for t in checkpoints
    ]
    return SnrCurveResult(checkpoints, empirical, lower, t0, slope, traces)


# -- paired engine comparison ---------------------------------------------------------


@dataclass
class EngineComparison:
    fractions: list[float]
    plain_top: list[float]
    gated_top: list[float]
    plain_f1: float
    gated_f1: float
    exploration_end: int
    slope: float


def compare_engines(
    spec: SyntheticSpec,
    fractions: list[float],
    seed: int = 0,
    tables: int = 5,
    buckets_per_table: int | None = None,
    tau0: float = 1e-4,
    top_n: int | None = None,
) -> EngineComparison:
    """Run the plain and the gated sketch over the identical stream and
    hashes and score both against the exact empirical matrix.

    Hyperparameters follow the standard recipe: data-derived signal floor
    and noise sd, default miss budget, full-bound solvers.
    """
    if buckets_per_table is None:
        buckets_per_table = max(spec.pair_count // 20, 1)
    data_seed, hash_seed = _seeds(seed, 0)
    r = _make_replicate(spec, tables, buckets_per_table, data_seed, hash_seed)
    t_total = spec.total_samples

    budget = hb.default_budget(r.params)
    t0 = hb.solve_exploration_length(r.params, tau0, budget.delta).exploration_end
    slope = hb.solve_threshold_slope(
        r.params, tau0, t0, budget.sampling_target
    ).slope

    w_plain = np.zeros((tables, buckets_per_table))
    replay_window(
        w_plain, r.buckets, r.signs, r.dev, r.ia, r.ib,
        t_total, 1, t_total, explore_end=t_total,
    )
    w_gated = np.zeros((tables, buckets_per_table))
    replay_window(
        w_gated, r.buckets, r.signs, r.dev, r.ia, r.ib,
        t_total, 1, t_total, explore_end=t0, tau0=tau0, theta=slope,
    )

    all_items = np.arange(spec.pair_count, dtype=np.int64)
    est_plain = estimates_from(w_plain, r.buckets, r.signs, all_items)
    est_gated = estimates_from(w_gated, r.buckets, r.signs, all_items)
    truth = pair_values(exact_matrix(r.data.samples, mode="cov"))

    alpha = spec.signal_fraction
    plain_top = [mean_top_correlation(est_plain, truth, f, alpha) for f in fractions]
    gated_top = [mean_top_correlation(est_gated, truth, f, alpha) for f in fractions]
    if top_n is None:
        top_n = max(1, len(r.signal_items))
    return EngineComparison(
        fractions=list(fractions),
        plain_top=plain_top,
        gated_top=gated_top,
        plain_f1=max_f1(est_plain, truth, top_n),
        gated_f1=max_f1(est_gated, truth, top_n),
        exploration_end=t0,
        slope=slope,
    )
