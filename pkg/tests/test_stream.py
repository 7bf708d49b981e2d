import numpy as np
import pytest

from ascs.stream import (
    PairIndexer,
    PairStream,
    PilotStats,
    StreamConfig,
    StreamMoments,
)


def two_pass_pair_cov(samples):
    """Definitional oracle: sum_k (y_a - mean_a)(y_b - mean_b) per pair."""
    centered = samples - samples.mean(axis=0)
    ia, ib = np.triu_indices(samples.shape[1], k=1)
    return (centered[:, ia] * centered[:, ib]).sum(axis=0)


def make_pilot(dim, mean=None, std=None, eps=0.01):
    stats = PilotStats(
        mean=np.zeros(dim) if mean is None else np.asarray(mean, dtype=float),
        std=np.ones(dim) if std is None else np.asarray(std, dtype=float),
    )
    stats.finalize(eps)
    return stats


# -- pair indexing -----------------------------------------------------------------


def test_pair_index_first_and_last():
    idx = PairIndexer(4)
    assert idx.pair_to_index(0, 1) == 0
    assert idx.pair_to_index(2, 3) == 5
    order = [idx.index_to_pair(i) for i in range(6)]
    assert order == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def test_pair_index_roundtrip_d50():
    idx = PairIndexer(50)
    for i in range(idx.pair_count):
        a, b = idx.index_to_pair(i)
        assert idx.pair_to_index(a, b) == i


def test_pair_index_contract():
    idx = PairIndexer(5)
    with pytest.raises(ValueError):
        idx.pair_to_index(3, 3)
    with pytest.raises(ValueError):
        idx.pair_to_index(4, 2)
    with pytest.raises(ValueError):
        idx.index_to_pair(10)


# -- running moments ----------------------------------------------------------------


def test_moments_match_two_pass():
    rng = np.random.default_rng(0)
    samples = rng.standard_normal((200, 7)) * 3.0 + 1.0
    mom = StreamMoments(7)
    for row in samples:
        mom.update(row)
    assert np.allclose(mom.mean, samples.mean(axis=0), rtol=1e-12)
    two_pass_var = ((samples - samples.mean(axis=0)) ** 2).mean(axis=0)
    assert np.allclose(mom.variance(), two_pass_var, rtol=1e-10)


def test_moments_keep_previous_mean():
    mom = StreamMoments(2)
    mom.update(np.array([1.0, 2.0]))
    mom.update(np.array([3.0, 6.0]))
    assert np.allclose(mom.prev_mean, [1.0, 2.0])
    assert np.allclose(mom.mean, [2.0, 4.0])


# -- dense covariance path --------------------------------------------------------------


def test_sample_at_running_mean_emits_zero():
    stream = PairStream(3, StreamConfig(adjustment=True))
    rng = np.random.default_rng(1)
    for _ in range(5):
        stream.process(rng.standard_normal(3))
    fixed_point = stream.moments.mean.copy()
    _, values = stream.process(fixed_point)
    assert np.allclose(values, 0.0, atol=1e-15)


def test_telescoping_identity_with_adjustment():
    rng = np.random.default_rng(2)
    samples = rng.standard_normal((50, 5)) + rng.uniform(-1, 1, size=5)
    stream = PairStream(5, StreamConfig(adjustment=True))
    running = np.zeros(stream.pair_count)
    for t, row in enumerate(samples, start=1):
        _, values = stream.process(row)
        running += values
        if t in (1, 2, 7, 25, 50):
            oracle = two_pass_pair_cov(samples[:t])
            assert np.allclose(running, oracle, rtol=1e-8, atol=1e-10)


def test_adjustment_magnitude_decays():
    # mean |adjustment| at t=1000 is below its value at t=10 on 10 streams
    for seed in range(10):
        rng = np.random.default_rng(seed)
        samples = rng.uniform(-1, 1, size=(1000, 4))
        plain = PairStream(4, StreamConfig(adjustment=False))
        adjusted = PairStream(4, StreamConfig(adjustment=True))
        sizes = {}
        for t, row in enumerate(samples, start=1):
            _, v0 = plain.process(row)
            _, v1 = adjusted.process(row)
            if t in (10, 1000):
                sizes[t] = np.abs(v1 - v0).mean()
        assert sizes[1000] < sizes[10]


def test_dense_increments_sum_to_t_times_covariance():
    rng = np.random.default_rng(3)
    samples = rng.standard_normal((50, 5)) * 2.0
    stream = PairStream(5, StreamConfig(adjustment=True))
    total = np.zeros(stream.pair_count)
    for row in samples:
        _, values = stream.process(row)
        total += values
    t = len(samples)
    centered = samples - samples.mean(axis=0)
    cov = centered.T @ centered / t
    ia, ib = np.triu_indices(5, k=1)
    assert np.allclose(total, t * cov[ia, ib], rtol=1e-8)


# -- correlation mode ----------------------------------------------------------------------


def test_correlation_mode_standardizes_with_frozen_stats():
    pilot = make_pilot(3, mean=[1.0, -2.0, 0.5], std=[2.0, 4.0, 1.0])
    stream = PairStream(3, StreamConfig(mode="corr"), pilot)
    y = np.array([3.0, 2.0, 0.5])
    z = (y - pilot.mean) / pilot.std
    _, values = stream.process(y)
    expected = [z[0] * z[1], z[0] * z[2], z[1] * z[2]]
    assert np.allclose(values, expected, rtol=1e-15)


def test_correlation_mode_drops_zero_variance_feature():
    pilot = make_pilot(3, mean=[0.0, 5.0, 0.0], std=[1.0, 0.0, 1.0])
    assert pilot.dropped[1]
    stream = PairStream(3, StreamConfig(mode="corr"), pilot)
    _, values = stream.process(np.array([2.0, 7.0, 3.0]))
    # pairs (0,1) and (1,2) touch the dropped feature and must be zero
    assert values[0] == 0.0 and values[2] == 0.0
    assert values[1] == pytest.approx(6.0)


def test_correlation_mode_requires_pilot():
    with pytest.raises(ValueError):
        PairStream(3, StreamConfig(mode="corr"))
    with pytest.raises(ValueError):
        StreamConfig(mode="corr", adjustment=True)


# -- sparse fast path ----------------------------------------------------------------------


def test_fast_path_emission_count_for_low_mean_sample():
    pilot = make_pilot(6)  # all features low-mean
    stream = PairStream(6, StreamConfig(fast_path=True), pilot)
    y = np.array([1.0, 0.0, 2.0, 0.0, 0.0, -1.0])  # n_z = 3
    items, values = stream.process(y)
    assert len(items) == 3 * 2 // 2
    assert len(values) == 3


def test_fast_path_matches_full_path_at_zero_means():
    # with frozen zero means the centered product equals the raw product,
    # so emissions must agree on pairs of nonzero entries
    dim = 8
    pilot = make_pilot(dim)
    rng = np.random.default_rng(4)
    fast = PairStream(dim, StreamConfig(mode="corr", fast_path=True), pilot)
    full = PairStream(dim, StreamConfig(mode="corr"), pilot)
    for _ in range(20):
        y = rng.standard_normal(dim) * (rng.random(dim) < 0.4)
        items, values = fast.process(y)
        _, dense = full.process(y)
        assert np.allclose(dense[items], values, rtol=1e-15)
        covered = np.zeros(full.pair_count, dtype=bool)
        covered[items] = True
        assert np.all(dense[~covered] == 0.0)


def test_fast_path_routes_high_mean_features_through_exact_product():
    dim = 4
    pilot = make_pilot(dim, mean=[0.0, 0.0, 3.0, 0.0])  # feature 2 is not low-mean
    stream = PairStream(dim, StreamConfig(mode="corr", fast_path=True), pilot)
    y = np.array([0.0, 1.0, 0.0, 0.0])
    items, values = stream.process(y)
    idx = PairIndexer(dim)
    got = dict(zip(items.tolist(), values.tolist()))
    # feature 2 emits against every active feature even though y[2] = 0
    assert got[idx.pair_to_index(1, 2)] == pytest.approx(1.0 * (0.0 - 3.0))
    # pure low-mean pairs with a zero entry are skipped entirely
    assert idx.pair_to_index(0, 1) not in got
    assert idx.pair_to_index(1, 3) not in got


def test_fast_path_worst_case_emission_budget():
    dim = 30
    mean = np.zeros(dim)
    mean[:3] = 5.0  # n_u = 3 dense features
    pilot = make_pilot(dim, mean=mean)
    stream = PairStream(dim, StreamConfig(fast_path=True), pilot)
    rng = np.random.default_rng(5)
    for _ in range(50):
        y = np.zeros(dim)
        nz = rng.choice(np.arange(3, dim), size=6, replace=False)  # n_z = 6
        y[nz] = rng.standard_normal(6)
        items, _ = stream.process(y)
        budget = (6 + 3) * (6 + 3 - 1) // 2
        assert len(items) <= budget


def test_fast_path_requires_pilot():
    with pytest.raises(ValueError):
        PairStream(4, StreamConfig(fast_path=True))
