import numpy as np
import pytest

from ascs.datagen import SyntheticSpec, generate
from ascs.errors import DataError, SolverInfeasibleError
from ascs.pipeline import PipelineConfig, read_manifest, run_pipeline, write_manifest


def synthetic_rows(dim=30, samples=400, alpha=0.02, seed=0):
    data = generate(SyntheticSpec(dim, samples, alpha, seed=seed))
    return data, list(data.samples)


def base_config(dim=30, samples=400, **kw):
    defaults = dict(
        dim=dim, total_samples=samples, tables=3, buckets=150,
        alpha=0.02, seed=7,
    )
    defaults.update(kw)
    return PipelineConfig(**defaults)


def test_config_geometry_resolution():
    cfg = PipelineConfig(dim=10, total_samples=100, tables=4, memory_budget=100)
    assert cfg.buckets == 25
    with pytest.raises(ValueError):
        PipelineConfig(dim=10, total_samples=100)
    with pytest.raises(ValueError):
        PipelineConfig(dim=10, total_samples=100, buckets=8, memory_budget=32)


def test_pipeline_resolves_hyperparameters_from_pilot():
    data, rows = synthetic_rows()
    result = run_pipeline(rows, base_config())
    m = result.manifest
    assert m["signal_floor"]["source"].startswith("pilot-quantile")
    assert m["sigma"]["source"] == "pilot-rms"
    assert m["tau0"]["source"] == "pilot-quantile-abs-0.1"
    assert m["exploration_end"] >= m["pilot_samples"]
    assert m["samples_processed"] == 400
    assert result.sketch.samples_seen == 400
    assert 0.0 < m["slope"] < m["signal_floor"]["value"]


def test_pipeline_flags_override_pilot():
    data, rows = synthetic_rows()
    cfg = base_config(signal_floor=0.5, sigma=1.0, tau0=1e-3)
    result = run_pipeline(rows, cfg)
    m = result.manifest
    assert m["signal_floor"] == {"value": 0.5, "source": "flag"}
    assert m["sigma"] == {"value": 1.0, "source": "flag"}
    assert m["tau0"] == {"value": 1e-3, "source": "flag"}


def test_pipeline_plain_engine_never_gates():
    data, rows = synthetic_rows()
    result = run_pipeline(rows, base_config(engine="cs"))
    assert result.manifest["exploration_end"] == 400
    assert result.manifest["slope"] == 0.0


def test_pipeline_deterministic():
    _, rows = synthetic_rows()
    a = run_pipeline(rows, base_config())
    b = run_pipeline(rows, base_config())
    assert a.sketch.table.tobytes() == b.sketch.table.tobytes()
    assert a.manifest == b.manifest


def test_pipeline_correlation_mode():
    data, rows = synthetic_rows()
    cfg = base_config(mode="corr", tau0=1e-4)
    result = run_pipeline(rows, cfg)
    assert result.sketch.mode == "corr"
    assert result.manifest["tau0"]["value"] == 1e-4


def test_pipeline_correlation_default_tau0():
    _, rows = synthetic_rows()
    result = run_pipeline(rows, base_config(mode="corr"))
    assert result.manifest["tau0"] == {"value": 1e-4, "source": "default-corr"}


def test_pipeline_stream_length_contracts():
    _, rows = synthetic_rows(samples=400)
    with pytest.raises(DataError, match="pilot"):
        run_pipeline(rows[:5], base_config())
    with pytest.raises(DataError, match="more than the declared"):
        run_pipeline(rows + rows[:1], base_config())
    short = run_pipeline(rows[:300], base_config())
    assert short.manifest["short_stream"] == 300


def test_pipeline_rejects_unseparable_pilot():
    _, rows = synthetic_rows()
    cfg = base_config(signal_floor=0.01, tau0=0.5)
    with pytest.raises(SolverInfeasibleError):
        run_pipeline(rows, cfg)


def test_pipeline_sparse_input_rows():
    _, rows = synthetic_rows()
    sparse_rows = [(np.arange(30), row) for row in rows]
    dense = run_pipeline(rows, base_config())
    sparse = run_pipeline(sparse_rows, base_config())
    assert sparse.sketch.table.tobytes() == dense.sketch.table.tobytes()


def test_manifest_roundtrip(tmp_path):
    _, rows = synthetic_rows()
    result = run_pipeline(rows, base_config())
    path = tmp_path / "run.json"
    write_manifest(result.manifest, path)
    assert read_manifest(path) == result.manifest
