import numpy as np
import pytest

from ascs.datagen import SyntheticSpec, bootstrap, generate, sample_stream


def test_single_signal_placement():
    spec = SyntheticSpec(
        dim=3, total_samples=10, signal_fraction=0.34,
        signal_low=0.5, signal_high=0.5, seed=0,
    )
    data = generate(spec)
    assert len(data.signal_values) == 1
    off = data.covariance[np.triu_indices(3, k=1)]
    assert np.count_nonzero(off) == 1
    assert np.allclose(np.diag(data.covariance), 1.0)


def test_signal_count_and_range():
    spec = SyntheticSpec(dim=40, total_samples=5, signal_fraction=0.01, seed=3)
    data = generate(spec)
    expected = round(0.01 * spec.pair_count)
    assert len(data.signal_values) == expected
    # repair may shrink values slightly below signal_low but never above high
    assert np.all(data.signal_values > 0.0)
    assert np.all(data.signal_values <= spec.signal_high)
    pairs = set(zip(data.signal_rows.tolist(), data.signal_cols.tolist()))
    assert len(pairs) == expected  # no pair selected twice


def test_covariance_is_positive_definite():
    for seed in range(5):
        spec = SyntheticSpec(dim=200, total_samples=2, signal_fraction=0.005, seed=seed)
        data = generate(spec)
        assert np.linalg.eigvalsh(data.covariance)[0] > 0
        assert np.allclose(data.covariance, data.covariance.T)


def test_same_seed_same_stream():
    spec = SyntheticSpec(dim=10, total_samples=50, signal_fraction=0.05, seed=42)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.covariance, b.covariance)


def test_empirical_covariance_within_clt_band():
    # every entry of the empirical covariance within 5 sigma of the truth,
    # sigma from the Gaussian fourth-moment formula (S_aa S_bb + S_ab^2) / T
    spec = SyntheticSpec(dim=10, total_samples=10**5, signal_fraction=0.05, seed=7)
    data = generate(spec)
    t = spec.total_samples
    centered = data.samples - data.samples.mean(axis=0)
    emp = centered.T @ centered / t
    truth = data.covariance
    band = 5 * np.sqrt(
        (np.outer(np.diag(truth), np.diag(truth)) + truth**2) / t
    )
    assert np.all(np.abs(emp - truth) < band)


def test_sample_stream_reuses_truth():
    spec = SyntheticSpec(dim=20, total_samples=30, signal_fraction=0.02, seed=1)
    data = generate(spec)
    s1 = sample_stream(data.covariance, 30, seed=5)
    s2 = sample_stream(data.covariance, 30, seed=5)
    s3 = sample_stream(data.covariance, 30, seed=6)
    assert np.array_equal(s1, s2)
    assert not np.array_equal(s1, s3)


def test_no_signals_rejected():
    spec = SyntheticSpec(dim=10, total_samples=5, signal_fraction=0.001, seed=0)
    with pytest.raises(ValueError):
        generate(spec)


def test_bootstrap_empty_and_single_row():
    data = np.array([[1.0, 2.0]])
    assert bootstrap(data, 0).shape == (0, 2)
    out = bootstrap(data, 5, seed=1)
    assert np.array_equal(out, np.repeat(data, 5, axis=0))


def test_bootstrap_uniform_histogram():
    rows = np.arange(100, dtype=float).reshape(100, 1)
    out = bootstrap(rows, 10**6, seed=9)
    counts = np.bincount(out[:, 0].astype(int), minlength=100)
    expected = 10**6 / 100
    sigma = np.sqrt(10**6 * 0.01 * 0.99)
    assert np.all(np.abs(counts - expected) < 5 * sigma)


def test_bootstrap_determinism():
    rows = np.random.default_rng(0).standard_normal((10, 3))
    assert np.array_equal(bootstrap(rows, 20, seed=4), bootstrap(rows, 20, seed=4))
