"""Synthetic test signals with known spectra.

Power-law noise is built by spectral synthesis: seeded complex Gaussian
coefficients are shaped by ``f^(-beta/2)`` and inverse transformed, so the
one-sided PSD is ``C f^-beta`` in expectation on [f_min_hz, Fs/2] and zero
below ``f_min_hz``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import DEFAULT_THRESHOLDS, RawStage, Stage, Thresholds, classify_slope
from .edf import Recording
from .errors import InvalidSpecError
from .filters import Epoch, epoch_signal
from .hypnogram import Hypnogram, HypnogramEntry

__all__ = [
    "SynthSpec",
    "synthesize_powerlaw",
    "powerlaw_epochs",
    "labeled_recording",
    "STAGE_SLOPE_STATS",
    "slope_corpus",
]


@dataclass(frozen=True)
class SynthSpec:
    beta: float
    duration_s: float
    sample_rate_hz: float = 200.0
    seed: int = 0
    variance: float = 1.0
    f_min_hz: float = 0.5

    def __post_init__(self):
        if not self.beta >= 0:
            raise InvalidSpecError(f"beta must be >= 0, got {self.beta}")
        if self.duration_s <= 0 or self.sample_rate_hz <= 0 or self.variance <= 0:
            raise InvalidSpecError("duration, sample rate and variance must be positive")
        n = self.duration_s * self.sample_rate_hz
        if abs(n - round(n)) > 1e-9:
            raise InvalidSpecError("duration x sample rate must be a whole number of samples")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))


def _shaped(n, fs, beta, f_min, rng):
    f = np.fft.rfftfreq(n, 1.0 / fs)
    amp = np.zeros(f.size)
    band = f >= f_min
    amp[band] = f[band] ** (-beta / 2.0)
    coef = (rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size)) / np.sqrt(2.0)
    if n % 2 == 0:
        coef[-1] = rng.standard_normal()  # Nyquist bin is real
    x = np.fft.irfft(amp * coef, n=n)
    # expected variance of x for unit-power coefficients
    w = np.full(f.size, 2.0)
    if n % 2 == 0:
        w[-1] = 1.0
    expected = np.sum(w * amp**2) / n**2
    return x / np.sqrt(expected)


def synthesize_powerlaw(spec: SynthSpec) -> np.ndarray:
    """Zero-mean Gaussian signal with expected variance ``spec.variance``.

    Deterministic for a given seed.
    """
    rng = np.random.default_rng(spec.seed)
    x = _shaped(spec.n_samples, spec.sample_rate_hz, spec.beta, spec.f_min_hz, rng)
    return x * np.sqrt(spec.variance)


def powerlaw_epochs(spec: SynthSpec, epoch_s: float = 30.0, channel: str = "synth") -> list[Epoch]:
    return epoch_signal(synthesize_powerlaw(spec), spec.sample_rate_hz, epoch_s, channel)


def labeled_recording(betas, epoch_s=30.0, sample_rate_hz=200.0, seed=0, channel="Cz",
                      thresholds: Thresholds = DEFAULT_THRESHOLDS, variance=100.0, extra_channels=()):
    """Concatenate one power-law segment per beta, labelled by where -beta falls.

    Each segment is shifted so it starts where the previous one ended,
    keeping the signal continuous across epoch boundaries. Returns the
    quantized Recording and a Hypnogram whose stage for each epoch is the
    classification of ``-beta`` (Wake, N3 for the middle band, R for REM).
    """
    rng = np.random.default_rng(seed)
    n = int(round(epoch_s * sample_rate_hz))
    pieces = []
    entries = []
    level = 0.0
    for i, beta in enumerate(betas):
        seg = _shaped(n, sample_rate_hz, float(beta), 0.5, rng) * np.sqrt(variance)
        seg = seg - seg[0] + level
        level = seg[-1]
        pieces.append(seg)
        stage = classify_slope(-float(beta), thresholds)
        raw = {Stage.WAKE: RawStage.WAKE, Stage.NREM3: RawStage.N3, Stage.REM: RawStage.REM}[stage]
        entries.append(HypnogramEntry(i * epoch_s, epoch_s, raw))
    x = np.concatenate(pieces) if pieces else np.zeros(0)
    rows = [x]
    labels = [channel]
    for j, name in enumerate(extra_channels):
        rows.append(_shaped(len(x), sample_rate_hz, 1.0, 0.5, rng) * np.sqrt(variance) if len(x) else x)
        labels.append(name)
    rec = Recording.from_physical(labels, sample_rate_hz, np.vstack(rows),
                                  header={"patient": "X X X synthetic", "recording": f"synthetic seed={seed}"})
    return rec, Hypnogram(entries)


# Per-stage slope distributions (median, standard deviation). The NREM3
# centre is not reported; it is modelled as the midpoint between the two
# thresholds, with the REM spread.
STAGE_SLOPE_STATS = {
    RawStage.WAKE: (-2.08, 0.6),
    RawStage.N3: ((DEFAULT_THRESHOLDS.wake_cut + DEFAULT_THRESHOLDS.rem_cut) / 2, 0.5),
    RawStage.REM: (-3.45, 0.5),
}


def slope_corpus(n_per_stage: int, seed: int = 0, stats=None):
    """Draw slopes per stage from normal distributions; returns (slopes, raw labels)."""
    stats = stats or STAGE_SLOPE_STATS
    rng = np.random.default_rng(seed)
    slopes, labels = [], []
    for stage, (mu, sd) in stats.items():
        slopes.append(rng.normal(mu, sd, n_per_stage))
        labels.extend([stage] * n_per_stage)
    return np.concatenate(slopes), labels
