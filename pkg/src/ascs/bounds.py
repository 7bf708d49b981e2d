"""Tail bounds and hyperparameter solvers for the active sampling loop.

All quantities live on the abstraction of p independent increment
streams, a fraction alpha of which have mean at least u ("signals")
while the rest have mean zero, each with per-sample standard deviation
sigma, hashed into K tables of R buckets.

Three closed-form bounds drive the solvers:

* ``exploration_miss_bound`` -- probability that a signal's estimate is
  still below the initial threshold when gating starts (after T0
  samples).  It decomposes into a Gaussian term, valid when the signal
  shares no bucket with another signal, plus the saturation floor
  1 - p0**K for the event that it does.
* ``sampling_miss_bound`` -- probability that a signal that cleared the
  initial threshold later dips under the rising threshold at some point
  of the sampling period (a supermartingale maximal bound).
* ``active_snr_lower_bound`` -- lower bound on the signal-to-noise ratio
  of the gated stream relative to ``plain_snr``, which is what inserting
  everything achieves.

The multi-table forms replace the single-table constants by their
asymptotic median-of-K approximations; they are approximations by
construction, since the exact multi-table tails have no closed form.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SolverInfeasibleError
from .sketch import CountSketch

logger = logging.getLogger(__name__)

#: smallest exploration length the solver will return; stands in for the
#: CLT validity constant (the usual n >= 30 rule of thumb)
DEFAULT_MIN_EXPLORATION = 30

#: absolute tolerance for the threshold-slope bisection
SLOPE_TOL = 1e-9


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class ProblemParams:
    """Constants describing one sketching problem.

    items : number of increment streams p (for pair streams, d(d-1)/2).
    total_samples : declared stream length T.
    signal_fraction : proportion alpha of items with non-zero mean.
    signal_floor : lower bound u > 0 on the signal means.
    noise_sd : per-sample standard deviation sigma of one increment.
    tables, buckets : sketch geometry K and R.
    """

    items: int
    total_samples: int
    signal_fraction: float
    signal_floor: float
    noise_sd: float
    tables: int
    buckets: int

    def __post_init__(self):
        if self.items < 1:
            raise ValueError(f"items must be >= 1, got {self.items}")
        if self.total_samples < 1:
            raise ValueError(f"total_samples must be >= 1, got {self.total_samples}")
        if not 0.0 < self.signal_fraction < 1.0:
            raise ValueError(
                f"signal_fraction must lie in (0, 1), got {self.signal_fraction}"
            )
        if self.signal_floor <= 0:
            raise ValueError(f"signal_floor must be > 0, got {self.signal_floor}")
        if self.noise_sd <= 0:
            raise ValueError(f"noise_sd must be > 0, got {self.noise_sd}")
        if self.tables < 1:
            raise ValueError(f"tables must be >= 1, got {self.tables}")
        if self.buckets < 1:
            raise ValueError(f"buckets must be >= 1, got {self.buckets}")

    def _multi(self, multi_table: bool | None) -> bool:
        return self.tables > 1 if multi_table is None else multi_table


@dataclass(frozen=True)
class MissBudget:
    """Miss-probability budget: delta at the end of exploration, delta_star
    in total.  Feasibility against the saturation probability is checked
    where the sketch geometry is known (solvers, harness)."""

    delta: float
    delta_star: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.delta < self.delta_star < 1.0:
            raise ValueError(
                f"delta_star must lie in (delta, 1), got {self.delta_star}"
            )

    @property
    def sampling_target(self) -> float:
        return self.delta_star - self.delta


# -- collision constants ------------------------------------------------------


def collision_free_prob(params: ProblemParams, multi_table: bool | None = None) -> float:
    """Probability that a signal shares no bucket with another signal.

    Single table: ((R - alpha) / R) ** (p - 1), evaluated in log space.
    Multi table: the same raised to the K-th power (independent tables).
    """
    log_p0 = (params.items - 1) * math.log1p(-params.signal_fraction / params.buckets)
    if params._multi(multi_table):
        log_p0 *= params.tables
    return math.exp(log_p0)


def saturation_prob(params: ProblemParams, multi_table: bool | None = None) -> float:
    """Complement of ``collision_free_prob``: the irreducible chance that a
    signal collides with another signal, which floors the exploration bound."""
    return -math.expm1(
        (params.tables if params._multi(multi_table) else 1)
        * (params.items - 1)
        * math.log1p(-params.signal_fraction / params.buckets)
    )


def collision_noise_factor(
    params: ProblemParams, multi_table: bool | None = None
) -> float:
    """Factor by which bucket collisions inflate the estimate noise sd.

    The estimate after t samples is Gaussian-like with sd
    factor * sigma / sqrt(t).  The multi-table form uses the asymptotic
    variance pi/(2K) of the median of K table readings.
    """
    p, a, r = params.items, params.signal_fraction, params.buckets
    base = (p - 1) * (1.0 - a) / (r - a)
    if params._multi(multi_table):
        base *= math.pi / (2.0 * params.tables)
    return math.sqrt(1.0 + base)


def sampling_noise_scale(
    params: ProblemParams, multi_table: bool | None = None
) -> float:
    """Noise scale of the sampling-period martingale bound.

    sigma * sqrt(1 + (p-1)(1-alpha) / (T**2 (R-alpha))), with the
    collision term additionally damped by pi/(2K) for multiple tables.
    """
    p, a, r = params.items, params.signal_fraction, params.buckets
    term = (p - 1) * (1.0 - a) / (params.total_samples**2 * (r - a))
    if params._multi(multi_table):
        term *= math.pi / (2.0 * params.tables)
    return params.noise_sd * math.sqrt(1.0 + term)


# -- miss-probability bounds -------------------------------------------------


def exploration_miss_bound(
    params: ProblemParams,
    exploration_end: float,
    tau0: float,
    multi_table: bool | None = None,
    include_saturation: bool = True,
) -> float:
    """Upper bound on the probability that a signal's estimate is below
    tau0 after ``exploration_end`` samples.

    Full form: Phi(-(sqrt(T0) u - T tau0 / sqrt(T0)) / (kappa sigma)) * p0^K
    + (1 - p0^K).  With ``include_saturation=False`` only the Gaussian
    factor is returned, i.e. the miss probability conditional on the
    signal not colliding with another signal; the conditional form stays
    solvable for budgets below the saturation floor.

    Strictly decreasing in ``exploration_end`` for any tau0 >= 0.
    """
    if not 1 <= exploration_end <= params.total_samples:
        raise ValueError(
            f"exploration_end must lie in [1, T], got {exploration_end}"
        )
    if tau0 < 0 or tau0 >= params.signal_floor:
        raise ValueError(
            f"tau0 must lie in [0, signal_floor), got {tau0} "
            f"with signal_floor={params.signal_floor}"
        )
    kappa = collision_noise_factor(params, multi_table)
    sqrt_t0 = math.sqrt(exploration_end)
    arg = -(
        sqrt_t0 * params.signal_floor - params.total_samples * tau0 / sqrt_t0
    ) / (kappa * params.noise_sd)
    gaussian = normal_cdf(arg)
    if not include_saturation:
        return gaussian
    p0 = collision_free_prob(params, multi_table)
    return gaussian * p0 + (1.0 - p0)


def sampling_miss_bound(
    params: ProblemParams,
    tau0: float,
    exploration_end: float,
    slope: float,
    multi_table: bool | None = None,
) -> float:
    """Upper bound on a cleared signal later dipping under the rising
    threshold tau(t) = tau0 + (slope / T)(t - T0) at any point of the
    sampling period:

    exp[(u - slope)(tau0 - (T0/T) slope) / omega**2]
    * Phi((T0 (2 slope - u) - tau0 T) / (sqrt(T0) omega))
    """
    if not 0.0 < slope < params.signal_floor:
        raise ValueError(
            f"slope must lie in (0, signal_floor), got {slope} "
            f"with signal_floor={params.signal_floor}"
        )
    if not 1 <= exploration_end <= params.total_samples:
        raise ValueError(
            f"exploration_end must lie in [1, T], got {exploration_end}"
        )
    u, t_total = params.signal_floor, params.total_samples
    omega = sampling_noise_scale(params, multi_table)
    growth = math.exp(
        (u - slope) * (tau0 - exploration_end / t_total * slope) / omega**2
    )
    tail = normal_cdf(
        (exploration_end * (2.0 * slope - u) - tau0 * t_total)
        / (math.sqrt(exploration_end) * omega)
    )
    return growth * tail


def plain_snr(params: ProblemParams) -> float:
    """SNR of the ungated stream: alpha (u**2 + sigma**2) / ((1-alpha) sigma**2).

    Independent of time; gating can only improve on it."""
    a, u, s = params.signal_fraction, params.signal_floor, params.noise_sd
    return a * (u**2 + s**2) / ((1.0 - a) * s**2)


def active_snr_lower_bound(
    params: ProblemParams,
    schedule,
    t: float,
    delta_star: float,
    multi_table: bool | None = None,
) -> float:
    """Lower bound on the gated stream's SNR at sample t >= T0:

    (1 - delta_star) / (Phi(-slope (sqrt(t) - sqrt(T0)) / (kappa sigma)) p0^K
    + 1 - p0^K) * plain_snr.

    Requires a schedule built with tau0 = 0, which is what the bound's
    derivation assumes.  Non-decreasing in t with plateau
    (1 - delta_star) / (1 - p0^K) * plain_snr.
    """
    if schedule.tau0 != 0.0:
        raise ValueError(
            f"the SNR bound assumes tau0 = 0, got tau0={schedule.tau0}"
        )
    t0 = schedule.exploration_end
    if t < t0:
        raise ValueError(f"t={t} is before the exploration end {t0}")
    kappa = collision_noise_factor(params, multi_table)
    p0 = collision_free_prob(params, multi_table)
    gate_leak = normal_cdf(
        -schedule.theta * (math.sqrt(t) - math.sqrt(t0)) / (kappa * params.noise_sd)
    )
    return (1.0 - delta_star) / (gate_leak * p0 + 1.0 - p0) * plain_snr(params)


# -- solvers -------------------------------------------------------------------


@dataclass(frozen=True)
class ExplorationSolve:
    """Solver output with its minimality certificate: the bound at the
    returned length and at one sample less (None when the floor binds)."""

    exploration_end: int
    bound_value: float
    bound_below: float | None


@dataclass(frozen=True)
class SlopeSolve:
    """Solver output with its maximality certificate: the bound at the
    returned slope and just above it (None when the upper end binds)."""

    slope: float
    bound_value: float
    bound_above: float | None


def solve_exploration_length(
    params: ProblemParams,
    tau0: float,
    delta: float,
    multi_table: bool | None = None,
    include_saturation: bool = True,
    min_exploration: int = DEFAULT_MIN_EXPLORATION,
) -> ExplorationSolve:
    """Minimum T0 in [min_exploration, T] with exploration_miss_bound <= delta.

    Raises SolverInfeasibleError when delta does not exceed the
    saturation probability (with ``include_saturation``) or when even a
    full-length exploration cannot meet the budget.
    """
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if include_saturation:
        sp = saturation_prob(params, multi_table)
        if delta <= sp:
            raise SolverInfeasibleError(
                f"delta={delta} does not exceed the saturation probability "
                f"{sp:.6g}; no exploration length can meet the budget"
            )

    def bound(t0: int) -> float:
        return exploration_miss_bound(
            params, t0, tau0, multi_table, include_saturation
        )

    floor = min(min_exploration, params.total_samples)
    top = params.total_samples
    if bound(floor) <= delta:
        best = floor
    elif bound(top) > delta:
        raise SolverInfeasibleError(
            f"exploration bound at T={top} is {bound(top):.6g} > delta={delta}; "
            "the stream is too short for the requested budget"
        )
    else:
        lo, hi = floor, top  # bound(lo) > delta >= bound(hi); bound decreasing
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if bound(mid) <= delta:
                hi = mid
            else:
                lo = mid
        best = hi

    below = bound(best - 1) if best > floor else None
    if below is not None and below <= delta:
        # the bound is provably monotone, but a linear rescue keeps the
        # minimality certificate unconditional
        logger.warning("exploration bound non-monotone near %d; rescanning", best)
        for t0 in range(floor, best):
            if bound(t0) <= delta:
                best = t0
                break
        below = bound(best - 1) if best > floor else None
    return ExplorationSolve(best, bound(best), below)


def solve_threshold_slope(
    params: ProblemParams,
    tau0: float,
    exploration_end: int,
    target: float,
    multi_table: bool | None = None,
    grid_points: int = 1024,
) -> SlopeSolve:
    """Largest slope theta in (0, u) with sampling_miss_bound <= target,
    located by bisection to within SLOPE_TOL.

    The bound is checked for monotonicity on a coarse grid first; if a
    violation shows up the solver falls back to scanning the grid from
    the top for the last feasible bracket before refining.
    """
    if target <= 0:
        raise SolverInfeasibleError(
            f"sampling miss target must be positive, got {target}"
        )
    u = params.signal_floor
    hi_end = u - SLOPE_TOL
    if hi_end <= 0:
        raise SolverInfeasibleError(f"signal_floor={u} leaves no room for a slope")

    def bound(theta: float) -> float:
        return sampling_miss_bound(params, tau0, exploration_end, theta, multi_table)

    lo_end = min(SLOPE_TOL, hi_end / 2)
    if bound(lo_end) > target:
        raise SolverInfeasibleError(
            f"sampling bound {bound(lo_end):.6g} at slope ~0 already exceeds "
            f"target {target}; lower delta or lengthen exploration"
        )
    if bound(hi_end) <= target:
        return SlopeSolve(hi_end, bound(hi_end), None)

    grid = np.linspace(lo_end, hi_end, grid_points)
    values = np.array([bound(th) for th in grid])
    lo, hi = lo_end, hi_end
    if np.any(np.diff(values) < -1e-12):
        logger.warning(
            "sampling bound non-monotone on the probe grid; using grid-scan fallback"
        )
        feasible = np.nonzero(values <= target)[0]
        top = int(feasible[-1])
        lo = float(grid[top])
        hi = float(grid[top + 1]) if top + 1 < grid_points else hi_end
    while hi - lo > SLOPE_TOL:
        mid = 0.5 * (lo + hi)
        if bound(mid) <= target:
            lo = mid
        else:
            hi = mid
    probe = min(lo + 1e-6, hi_end)
    return SlopeSolve(lo, bound(lo), bound(probe) if probe > lo else None)


def default_budget(
    params: ProblemParams, multi_table: bool | None = None
) -> MissBudget:
    """Default miss budget: delta = max(1.01 * SP, 0.05), delta_star = delta + 0.15."""
    sp = saturation_prob(params, multi_table)
    delta = max(1.01 * sp, 0.05)
    delta_star = delta + 0.15
    if delta_star >= 1.0:
        raise SolverInfeasibleError(
            f"saturation probability {sp:.6g} pushes delta_star to "
            f"{delta_star:.6g} >= 1; the sketch is too crowded for a budget"
        )
    return MissBudget(delta, delta_star)


# -- data-driven parameter estimates ------------------------------------------


def estimate_sigma(increments: np.ndarray) -> float:
    """Root mean square of a (samples x items) block of increments.

    Approximates the average per-item standard deviation; on a zero-mean
    stream the second moment equals the variance.
    """
    increments = np.asarray(increments, dtype=np.float64)
    if increments.size == 0:
        raise DataError("cannot estimate sigma from an empty prefix")
    ms = float(np.mean(increments**2))
    if ms == 0.0:
        raise DataError("all-zero stream prefix; sigma estimate degenerate")
    return math.sqrt(ms)


def nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    """Nearest-rank quantile: the ceil(q*n)-th smallest value (q in [0, 1])."""
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile must lie in [0, 1], got {q}")
    values = np.sort(np.asarray(values, dtype=np.float64))
    n = len(values)
    if n == 0:
        raise ValueError("cannot take a quantile of an empty set")
    rank = max(1, math.ceil(q * n))
    return float(values[min(rank, n) - 1])


def pilot_percentiles(
    pilot: CountSketch, items: np.ndarray, quantiles: list[float]
) -> list[float]:
    """Nearest-rank quantiles of the pilot sketch's estimates over ``items``.

    Used to pick the signal floor (1 - alpha quantile) and, in covariance
    mode, the initial threshold (a small quantile of the magnitudes).
    """
    items = np.asarray(items, dtype=np.int64)
    if len(items) == 0:
        raise ValueError("pilot percentile subset must be non-empty")
    estimates = pilot.estimate_batch(items)
    return [nearest_rank_quantile(estimates, q) for q in quantiles]
