"""One-pass sparse covariance/correlation sketching.

A signed count sketch compresses the p = d(d-1)/2 pair-increment
streams of a d-dimensional sample stream; an active sampling gate
raises the signal-to-noise ratio of what actually enters the sketch by
inserting, after an exploration phase, only pairs whose current
estimate clears a rising threshold.  Closed-form tail bounds drive the
choice of the exploration length and the threshold slope.
"""

from .active import ActiveSketch, ThresholdSchedule
from .bounds import (
    MissBudget,
    ProblemParams,
    active_snr_lower_bound,
    collision_free_prob,
    collision_noise_factor,
    default_budget,
    estimate_sigma,
    exploration_miss_bound,
    normal_cdf,
    pilot_percentiles,
    plain_snr,
    sampling_miss_bound,
    sampling_noise_scale,
    saturation_prob,
    solve_exploration_length,
    solve_threshold_slope,
)
from .datagen import SyntheticData, SyntheticSpec, bootstrap, generate, sample_stream
from .dataio import ShuffleBuffer, iter_libsvm, parse_libsvm, shuffled_stream
from .errors import (
    AscsError,
    DataError,
    FormatError,
    OracleUnavailableError,
    SolverInfeasibleError,
    StreamLengthError,
)
from .evaluate import (
    EvalReport,
    compare_engines,
    exact_matrix,
    max_f1,
    mean_top_correlation,
    measure_snr,
    miss_probability_sweep,
    pair_values,
    snr_experiment,
    validate_miss_probability,
)
from .hashing import HashFamily
from .sketch import CountSketch
from .stream import PairIndexer, PairStream, PilotStats, StreamConfig, StreamMoments

__version__ = "0.1.0"

__all__ = [
    "ActiveSketch",
    "AscsError",
    "CountSketch",
    "DataError",
    "EvalReport",
    "FormatError",
    "HashFamily",
    "MissBudget",
    "OracleUnavailableError",
    "PairIndexer",
    "PairStream",
    "PilotStats",
    "ProblemParams",
    "ShuffleBuffer",
    "SolverInfeasibleError",
    "StreamConfig",
    "StreamLengthError",
    "StreamMoments",
    "SyntheticData",
    "SyntheticSpec",
    "ThresholdSchedule",
    "active_snr_lower_bound",
    "bootstrap",
    "collision_free_prob",
    "collision_noise_factor",
    "compare_engines",
    "default_budget",
    "estimate_sigma",
    "exact_matrix",
    "exploration_miss_bound",
    "generate",
    "iter_libsvm",
    "max_f1",
    "mean_top_correlation",
    "measure_snr",
    "miss_probability_sweep",
    "normal_cdf",
    "pair_values",
    "parse_libsvm",
    "pilot_percentiles",
    "plain_snr",
    "sample_stream",
    "sampling_miss_bound",
    "sampling_noise_scale",
    "saturation_prob",
    "shuffled_stream",
    "snr_experiment",
    "solve_exploration_length",
    "solve_threshold_slope",
    "validate_miss_probability",
]
