"""End-to-end run assembly: pilot phase, hyperparameter resolution and
the streaming loop feeding either engine.

A run consumes the stream once.  The first ``pilot_fraction`` of the
declared samples is buffered and used to (a) freeze per-feature
standardization statistics for correlation mode and the sparse fast
path, (b) estimate the average increment noise via the root mean
square, and (c) sketch a pilot prefix whose estimate percentiles supply
the signal floor and, in covariance mode, the initial threshold.  The
buffered samples are then replayed through the main engine (they fall
inside the exploration phase by construction) and the remainder of the
stream is processed as it arrives.

Every resolved hyperparameter is recorded in the run manifest together
with its provenance, which is what makes runs replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import __version__
from . import bounds as hb
from .active import ActiveSketch, ThresholdSchedule
from .errors import DataError, SolverInfeasibleError
from .hashing import HashFamily
from .sketch import CountSketch
from .stream import PairStream, PilotStats, StreamConfig, StreamMoments

#: largest pair subset used for pilot percentiles and sigma estimates
SUBSET_CAP = 10**6


@dataclass
class PipelineConfig:
    dim: int
    total_samples: int
    tables: int = 5
    buckets: int | None = None
    memory_budget: int | None = None   # total floats M; buckets = M // tables
    mode: str = "cov"
    engine: str = "ascs"
    alpha: float = 0.005
    signal_floor: float | None = None  # u flag; pilot-derived when None
    sigma: float | None = None
    tau0: float | None = None
    delta: float | None = None
    delta_star: float | None = None
    pilot_fraction: float = 0.05
    seed: int = 0
    gate_mode: str = "absolute"
    adjustment: bool = False
    fast_path: bool = False
    min_exploration: int = hb.DEFAULT_MIN_EXPLORATION

    def __post_init__(self):
        if self.engine not in ("cs", "ascs"):
            raise ValueError(f"engine must be 'cs' or 'ascs', got {self.engine!r}")
        if (self.buckets is None) == (self.memory_budget is None):
            raise ValueError("exactly one of buckets / memory_budget must be set")
        if self.buckets is None:
            self.buckets = max(self.memory_budget // self.tables, 1)
        if not 0.0 < self.pilot_fraction < 1.0:
            raise ValueError(
                f"pilot_fraction must lie in (0, 1), got {self.pilot_fraction}"
            )
        if self.total_samples < 1:
            raise ValueError(
                f"total_samples must be >= 1, got {self.total_samples}"
            )

    @property
    def pair_count(self) -> int:
        return self.dim * (self.dim - 1) // 2

    @property
    def pilot_samples(self) -> int:
        return max(1, int(self.pilot_fraction * self.total_samples))


@dataclass
class RunResult:
    sketch: CountSketch
    manifest: dict
    engine: ActiveSketch | None = None
    stream: PairStream | None = None


def _resolved(value, source) -> dict:
    return {"value": value, "source": source}


def _densify(dim: int, sample) -> np.ndarray:
    """Accept dense rows or sparse (indices, values) pairs."""
    if isinstance(sample, tuple):
        indices, values = sample
        y = np.zeros(dim)
        y[np.asarray(indices, dtype=np.int64)] = values
        return y
    y = np.asarray(sample, dtype=np.float64)
    if y.shape != (dim,):
        raise DataError(f"sample shape {y.shape} does not match dim={dim}")
    return y


def _pair_subset(pair_count: int, seed: int) -> np.ndarray:
    if pair_count <= SUBSET_CAP:
        return np.arange(pair_count, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA5]))
    return np.sort(rng.choice(pair_count, size=SUBSET_CAP, replace=False))


def run_pipeline(samples: Iterable, config: PipelineConfig) -> RunResult:
    """Consume the sample stream once and return the filled sketch plus
    the manifest of resolved hyperparameters."""
    dim, t_total = config.dim, config.total_samples
    pilot_len = config.pilot_samples
    manifest: dict = {
        "package_version": __version__,
        "dim": dim,
        "pair_count": config.pair_count,
        "total_samples": t_total,
        "tables": config.tables,
        "buckets": config.buckets,
        "mode": config.mode,
        "engine": config.engine,
        "seed": config.seed,
        "gate_mode": config.gate_mode,
        "adjustment": config.adjustment,
        "fast_path": config.fast_path,
        "pilot_fraction": config.pilot_fraction,
        "pilot_samples": pilot_len,
        "alpha": _resolved(config.alpha, "flag"),
    }

    it = iter(samples)
    buffered: list[np.ndarray] = []
    pilot_moments = StreamMoments(dim)
    for _ in range(pilot_len):
        try:
            y = _densify(dim, next(it))
        except StopIteration:
            raise DataError(
                f"stream ended during the pilot ({len(buffered)} of {pilot_len} samples)"
            )
        buffered.append(y)
        pilot_moments.update(y)

    needs_pilot_stats = config.mode == "corr" or config.fast_path
    pilot_stats = (
        PilotStats.from_moments(pilot_moments, StreamConfig().sparse_eps)
        if needs_pilot_stats
        else None
    )
    stream_config = StreamConfig(
        mode=config.mode,
        adjustment=config.adjustment,
        fast_path=config.fast_path,
    )

    # pilot sketch over the buffered prefix: unbiased prefix-mean estimates
    subset = _pair_subset(config.pair_count, config.seed)
    pilot_family = HashFamily(
        int(np.random.SeedSequence([config.seed, 0x51]).generate_state(1)[0]),
        config.tables,
        config.buckets,
    )
    cache = config.pair_count if config.pair_count <= SUBSET_CAP else None
    pilot_sketch = CountSketch(
        pilot_family, pilot_len, mode=config.mode, item_count=cache
    )
    pilot_stream = PairStream(dim, stream_config, pilot_stats)
    ssq, emitted_rows = 0.0, 0
    for y in buffered:
        items, values = pilot_stream.process(y)
        pilot_sketch.insert_batch(
            np.arange(len(values)) if items is None else items, values
        )
        pilot_sketch.advance()
        ssq += float(np.sum(np.square(values)))
        emitted_rows += 1

    if config.sigma is not None:
        sigma = _resolved(config.sigma, "flag")
    else:
        ms = ssq / (emitted_rows * config.pair_count)
        if ms == 0.0:
            raise DataError("all-zero pilot prefix; cannot estimate the noise sd")
        sigma = _resolved(float(np.sqrt(ms)), "pilot-rms")

    if config.signal_floor is not None:
        floor = _resolved(config.signal_floor, "flag")
    else:
        q = 1.0 - config.alpha
        (value,) = hb.pilot_percentiles(pilot_sketch, subset, [q])
        floor = _resolved(float(value), f"pilot-quantile-{q:.6g}")

    if config.tau0 is not None:
        tau0 = _resolved(config.tau0, "flag")
    elif config.mode == "corr":
        tau0 = _resolved(1e-4, "default-corr")
    else:
        magnitudes = np.abs(pilot_sketch.estimate_batch(subset))
        tau0 = _resolved(
            float(hb.nearest_rank_quantile(magnitudes, 0.10)), "pilot-quantile-abs-0.1"
        )

    manifest["sigma"] = sigma
    manifest["signal_floor"] = floor
    manifest["tau0"] = tau0

    if floor["value"] <= tau0["value"]:
        raise SolverInfeasibleError(
            f"resolved signal floor {floor['value']:.6g} does not exceed "
            f"tau0 {tau0['value']:.6g}; the pilot could not separate signals"
        )

    params = hb.ProblemParams(
        items=config.pair_count,
        total_samples=t_total,
        signal_fraction=config.alpha,
        signal_floor=floor["value"],
        noise_sd=sigma["value"],
        tables=config.tables,
        buckets=config.buckets,
    )
    manifest["saturation_probability"] = hb.saturation_prob(params)

    if config.engine == "ascs":
        if config.delta is not None:
            ds = config.delta_star if config.delta_star is not None else min(
                config.delta + 0.15, 0.999
            )
            budget = hb.MissBudget(config.delta, ds)
            manifest["budget_source"] = "flag"
        else:
            budget = hb.default_budget(params)
            manifest["budget_source"] = "default(1.01*SP,0.05)+0.15"
        solved = hb.solve_exploration_length(
            params, tau0["value"], budget.delta,
            min_exploration=config.min_exploration,
        )
        t0 = max(solved.exploration_end, pilot_len)
        slope = hb.solve_threshold_slope(
            params, tau0["value"], t0, budget.sampling_target
        )
        schedule = ThresholdSchedule(tau0["value"], slope.slope, t0, t_total)
        manifest.update(
            delta=budget.delta,
            delta_star=budget.delta_star,
            exploration_end_solved=solved.exploration_end,
            exploration_end=t0,
            slope=slope.slope,
            snr_plateau=hb.plain_snr(params)
            * (1.0 - budget.delta_star)
            / hb.saturation_prob(params),
        )
    else:
        schedule = ThresholdSchedule(0.0, 0.0, t_total, t_total)
        manifest.update(delta=None, delta_star=None, exploration_end=t_total, slope=0.0)

    family = HashFamily(config.seed, config.tables, config.buckets)
    sketch = CountSketch(family, t_total, mode=config.mode, item_count=cache)
    engine = ActiveSketch(sketch, schedule, gate_mode=config.gate_mode)
    main_stream = PairStream(dim, stream_config, pilot_stats)

    consumed = 0
    for y in buffered:
        items, values = main_stream.process(y)
        engine.process_increments(values, items)
        consumed += 1
    for sample in it:
        if consumed == t_total:
            raise DataError(
                f"stream holds more than the declared {t_total} samples"
            )
        items, values = main_stream.process(_densify(dim, sample))
        engine.process_increments(values, items)
        consumed += 1
    if consumed < t_total:
        manifest["short_stream"] = consumed

    manifest["samples_processed"] = consumed
    return RunResult(sketch=sketch, manifest=manifest, engine=engine, stream=main_stream)


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
