"""Per-stage wall time and memory accounting for the epoch pipeline.

Stands in for on-device energy profiling: only wall-clock time and byte
counts are reported, energy is not measured.
"""

from __future__ import annotations

import time
import tracemalloc

import numpy as np

from .classifier import classify_slope
from .dpss import DEFAULT_SPARSE_EPSILON, sparsify_tapers
from .filters import Epoch, filter_signal
from .multitaper import multitaper_psd
from .pipeline import Pipeline, PipelineConfig
from .slope import spectral_slope
from .synth import SynthSpec, synthesize_powerlaw

__all__ = ["run_bench", "STAGES"]

STAGES = ("filtering", "psd", "slope", "classify")


def _stats(samples_s):
    a = np.asarray(samples_s) * 1e3
    return {"median_ms": float(np.median(a)), "p95_ms": float(np.percentile(a, 95)),
            "min_ms": float(a.min()), "max_ms": float(a.max())}


def _peak_bytes(fn):
    tracemalloc.start()
    try:
        fn()
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


def run_bench(config: PipelineConfig | None = None, n_epochs: int = 100, seed: int = 0,
              sparse_epsilon: float = DEFAULT_SPARSE_EPSILON, beta: float = 2.0) -> dict:
    """Time each stage over ``n_epochs`` synthetic epochs with tapers precomputed.

    Each raw epoch is low-passed on its own, as a device handling one epoch
    at a time would.
    """
    config = config or PipelineConfig()
    pipe = Pipeline(config)
    t0 = time.perf_counter()
    tapers = pipe.tapers
    taper_setup_s = time.perf_counter() - t0
    fs = config.target_rate_hz
    n = tapers.n_samples
    raw = synthesize_powerlaw(SynthSpec(beta, n_epochs * config.epoch_s, fs, seed)).reshape(n_epochs, n)

    times = {s: [] for s in STAGES}
    total = []
    labels = []
    for x in raw:
        t0 = time.perf_counter()
        y = filter_signal(pipe.cascade, x, zero_phase=config.zero_phase)
        t1 = time.perf_counter()
        psd = multitaper_psd(Epoch(y, fs, config.epoch_s), tapers, band=None)
        t2 = time.perf_counter()
        feat = spectral_slope(psd, config.fit_band_hz)
        t3 = time.perf_counter()
        labels.append(classify_slope(feat.slope, config.thresholds))
        t4 = time.perf_counter()
        for stage, dt in zip(STAGES, (t1 - t0, t2 - t1, t3 - t2, t4 - t3)):
            times[stage].append(dt)
        total.append(t4 - t0)

    k = tapers.n_tapers
    n_bins = n // 2 + 1
    sos_bytes = pipe.cascade.sections.nbytes
    filtering_live = 2 * n * 8 + sos_bytes + pipe.cascade.n_sections * 2 * 8  # in, out, coefs, state
    psd_live = tapers.nbytes + k * n * 8 + k * n_bins * 16 + n_bins * 8  # tapers, tapered, spectra, power

    sample = raw[0]
    filt_peak = _peak_bytes(lambda: filter_signal(pipe.cascade, sample))
    ep = Epoch(filter_signal(pipe.cascade, sample), fs, config.epoch_s)
    psd_peak = _peak_bytes(lambda: multitaper_psd(ep, tapers, band=None))

    sparse = sparsify_tapers(tapers, sparse_epsilon) if sparse_epsilon > 0 else tapers
    dense_bytes = tapers.dense().nbytes
    return {
        "config": {"epoch_s": config.epoch_s, "sample_rate_hz": fs, "n_samples": n, "n_tapers": k,
                   "filter_order": config.filter_order, "zero_phase": config.zero_phase},
        "n_epochs": n_epochs,
        "taper_setup_ms": taper_setup_s * 1e3,
        "stages": {s: _stats(v) for s, v in times.items()},
        "total": _stats(total),
        "memory_bytes": {
            "filtering_live_buffers": filtering_live,
            "psd_live_buffers": psd_live,
            "filtering_peak_traced": filt_peak,
            "psd_peak_traced": psd_peak,
        },
        "taper_storage_bytes": {
            "epsilon": sparse_epsilon,
            "dense": dense_bytes,
            "sparse": sparse.nbytes,
            "density": sparse.densities(),
        },
        "label_counts": {lab.value: labels.count(lab) for lab in sorted(set(labels), key=lambda s: s.value)},
        "note": "desk-scale wall time and byte counts; energy is not measured",
    }
