import pytest

from mtslope.bench import STAGES, run_bench
from mtslope.pipeline import PipelineConfig


@pytest.fixture(scope="module")
def report():
    return run_bench(PipelineConfig(), n_epochs=100, seed=1, sparse_epsilon=1e-6)


def test_structure(report):
    assert set(report["stages"]) == set(STAGES)
    for s in STAGES:
        st = report["stages"][s]
        assert 0 < st["min_ms"] <= st["median_ms"] <= st["p95_ms"] <= st["max_ms"]
    assert report["n_epochs"] == 100
    assert "energy is not measured" in report["note"]


def test_memory_split(report):
    mem = report["memory_bytes"]
    assert mem["psd_live_buffers"] > mem["filtering_live_buffers"] > 0
    assert mem["psd_peak_traced"] > 0 and mem["filtering_peak_traced"] > 0


def test_sparse_storage_not_larger(report):
    tb = report["taper_storage_bytes"]
    assert tb["dense"] == 29 * 6000 * 8
    assert tb["sparse"] <= tb["dense"]
    assert len(tb["density"]) == 29


def test_beta_two_is_wake(report):
    counts = report["label_counts"]
    assert counts.get("Wake", 0) >= 80


def test_psd_dominates(report):
    st = report["stages"]
    assert st["psd"]["median_ms"] > st["slope"]["median_ms"]
    assert st["psd"]["median_ms"] > st["classify"]["median_ms"]
