"""Pre-processing: Butterworth low-pass denoising, FIR decimation, epoching.

The Butterworth design is realized as cascaded second-order sections using
the bilinear transform with the cutoff pre-warped, so |H(cutoff)| is exactly
1/sqrt(2). Filtering is causal single-pass by default; pass
``zero_phase=True`` for offline forward-backward filtering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .errors import (
    InsufficientDataError,
    InvalidInputError,
    InvalidSpecError,
    UnsupportedRatioError,
)

__all__ = [
    "FilterSpec",
    "SosCascade",
    "ResampleSpec",
    "Epoch",
    "StreamFilter",
    "design_butterworth_lowpass",
    "filter_signal",
    "design_antialias_fir",
    "resample",
    "epoch_signal",
]

# Kaiser design target; a few dB above the 60 dB requirement so the
# stopband edge itself clears it.
FIR_ATTENUATION_DB = 65.0
FIR_PASSBAND_FRACTION = 0.8  # passband edge as a fraction of output Nyquist


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    order: int
    cutoff_hz: float
    sample_rate_hz: float

    def __post_init__(self):
        if self.kind not in ("butterworth-lowpass", "fir-lowpass"):
            raise InvalidSpecError(f"unknown filter kind {self.kind!r}")
        if int(self.order) != self.order or self.order < 1:
            raise InvalidSpecError(f"order must be a positive integer, got {self.order}")
        if self.sample_rate_hz <= 0:
            raise InvalidSpecError("sample rate must be positive")
        if not 0 < self.cutoff_hz < self.sample_rate_hz / 2:
            raise InvalidSpecError(
                f"cutoff {self.cutoff_hz} Hz must lie in (0, {self.sample_rate_hz / 2}) Hz"
            )


@dataclass(frozen=True)
class SosCascade:
    """Second-order sections plus a scalar gain.

    ``sections`` has shape (n_sections, 6) laid out as
    ``[b0, b1, b2, 1, a1, a2]``. A first-order tail is stored with
    ``b2 = a2 = 0``.
    """

    sections: np.ndarray
    overall_gain: float
    spec: FilterSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "sections", _readonly(np.atleast_2d(self.sections)))

    @property
    def n_sections(self) -> int:
        return self.sections.shape[0]

    def to_sos(self) -> np.ndarray:
        """Sections with the gain folded into the first numerator."""
        sos = np.array(self.sections)
        sos[0, :3] *= self.overall_gain
        return sos

    def poles(self) -> np.ndarray:
        out = []
        for a1, a2 in self.sections[:, 4:6]:
            out.extend(np.roots([1.0, a1, a2]) if a2 != 0 else np.roots([1.0, a1]))
        return np.asarray(out)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def frequency_response(self, freqs_hz, sample_rate_hz: float | None = None) -> np.ndarray:
        """Complex response evaluated directly on the unit circle."""
        if sample_rate_hz is None:
            if self.spec is None:
                raise InvalidSpecError("sample rate unknown for this cascade")
            sample_rate_hz = self.spec.sample_rate_hz
        z1 = np.exp(-2j * np.pi * np.asarray(freqs_hz, dtype=float) / sample_rate_hz)
        h = np.full(z1.shape, self.overall_gain, dtype=complex)
        for b0, b1, b2, a0, a1, a2 in self.sections:
            h *= (b0 + b1 * z1 + b2 * z1**2) / (a0 + a1 * z1 + a2 * z1**2)
        return h


@dataclass(frozen=True)
class ResampleSpec:
    input_rate_hz: float
    output_rate_hz: float
    decimation_factor: int
    fir_taps: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "fir_taps", _readonly(self.fir_taps))
        if self.input_rate_hz != self.output_rate_hz * self.decimation_factor:
            raise UnsupportedRatioError(
                f"{self.input_rate_hz} Hz -> {self.output_rate_hz} Hz is not decimation by {self.decimation_factor}"
            )

    @property
    def is_identity(self) -> bool:
        return self.decimation_factor == 1

    @property
    def group_delay(self) -> int:
        return (len(self.fir_taps) - 1) // 2


@dataclass(frozen=True)
class Epoch:
    """One fixed-length single-channel analysis segment."""

    samples: np.ndarray = field(repr=False)
    sample_rate_hz: float
    duration_s: float
    source_channel: str = ""
    start_time_s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "samples", _readonly(self.samples))
        expected = self.duration_s * self.sample_rate_hz
        if abs(expected - round(expected)) > 1e-9 or self.samples.shape != (round(expected),):
            raise InvalidInputError(
                f"epoch of {self.duration_s} s at {self.sample_rate_hz} Hz needs "
                f"{expected:g} samples, got shape {self.samples.shape}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInputError("epoch contains NaN or Inf samples")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


def design_butterworth_lowpass(order: int, cutoff_hz: float, sample_rate_hz: float) -> SosCascade:
    """Digital Butterworth low-pass as cascaded biquads.

    Each conjugate pole pair of the analog prototype (cutoff pre-warped to
    ``2 fs tan(pi fc / fs)``) is mapped through the bilinear transform on its
    own, giving ``ceil(order / 2)`` sections with unit DC gain each.
    """
    spec = FilterSpec("butterworth-lowpass", order, cutoff_hz, sample_rate_hz)
    order = int(order)
    k = 2.0 * sample_rate_hz
    wc = k * math.tan(math.pi * cutoff_hz / sample_rate_hz)
    sections = []
    gain = 1.0
    for i in range(order // 2):
        theta = math.pi * (2 * i + 1 + order) / (2 * order)
        re = wc * math.cos(theta)  # negative real part of the analog pole
        mag2 = wc * wc
        a0 = k * k - 2 * re * k + mag2
        a1 = (2 * mag2 - 2 * k * k) / a0
        a2 = (k * k + 2 * re * k + mag2) / a0
        sections.append([1.0, 2.0, 1.0, 1.0, a1, a2])
        gain *= mag2 / a0
    if order % 2:
        a0 = k + wc
        sections.append([1.0, 1.0, 0.0, 1.0, (wc - k) / a0, 0.0])
        gain *= wc / a0
    return SosCascade(np.array(sections), gain, spec)


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise InvalidInputError(f"expected a 1-D signal, got shape {x.shape}")
    bad = ~np.isfinite(x)
    if bad.any():
        raise InvalidInputError(
            f"signal contains {int(bad.sum())} non-finite samples (first at index {int(np.argmax(bad))})"
        )
    return x


def filter_signal(cascade: SosCascade, x, zero_phase: bool = False) -> np.ndarray:
    """Apply the cascade with zero initial state.

    Causal by default. ``zero_phase=True`` runs forward-backward, which
    squares the magnitude response.
    """
    x = _check_finite(x)
    sos = cascade.to_sos()
    if zero_phase:
        return signal.sosfiltfilt(sos, x)
    return signal.sosfilt(sos, x)


class StreamFilter:
    """Causal filtering across consecutive chunks of one stream.

    Keeps the section state between calls, so feeding a signal in pieces
    gives the same output as one call to :func:`filter_signal`. Not meant to
    be shared between streams or threads.
    """

    def __init__(self, cascade: SosCascade):
        self._sos = cascade.to_sos()
        self._zi = np.zeros((self._sos.shape[0], 2))

    def process(self, chunk) -> np.ndarray:
        chunk = _check_finite(chunk)
        y, self._zi = signal.sosfilt(self._sos, chunk, zi=self._zi)
        return y

    def reset(self):
        self._zi[:] = 0.0


def _kaiser_lowpass(cutoff, transition, attenuation_db):
    """Windowed-sinc low-pass; frequencies in cycles/sample."""
    a = attenuation_db
    if a > 50:
        beta = 0.1102 * (a - 8.7)
    elif a >= 21:
        beta = 0.5842 * (a - 21) ** 0.4 + 0.07886 * (a - 21)
    else:
        beta = 0.0
    n_taps = int(math.ceil((a - 7.95) / (2.285 * 2 * math.pi * transition))) + 1
    n_taps += 1 - n_taps % 2  # odd length: integer group delay
    m = np.arange(n_taps) - (n_taps - 1) / 2
    h = 2 * cutoff * np.sinc(2 * cutoff * m) * np.kaiser(n_taps, beta)
    return h / h.sum()


def design_antialias_fir(input_rate_hz: float, output_rate_hz: float) -> ResampleSpec:
    """Linear-phase Kaiser FIR for integer-factor decimation.

    Passband edge at 0.8 of the output Nyquist, stopband starting at the
    output Nyquist with at least 60 dB attenuation.
    """
    if input_rate_hz <= 0 or output_rate_hz <= 0:
        raise InvalidSpecError("sample rates must be positive")
    ratio = input_rate_hz / output_rate_hz
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9 * ratio:
        raise UnsupportedRatioError(
            f"only integer decimation is supported, got {input_rate_hz} / {output_rate_hz} = {ratio:g}"
        )
    if factor == 1:
        return ResampleSpec(input_rate_hz, output_rate_hz, 1, np.array([1.0]))
    nyq_out = output_rate_hz / 2
    f_pass = FIR_PASSBAND_FRACTION * nyq_out / input_rate_hz
    f_stop = nyq_out / input_rate_hz
    taps = _kaiser_lowpass((f_pass + f_stop) / 2, f_stop - f_pass, FIR_ATTENUATION_DB)
    return ResampleSpec(input_rate_hz, output_rate_hz, factor, taps)


def resample(spec: ResampleSpec, x) -> np.ndarray:
    """Low-pass and decimate, compensating the FIR group delay.

    The signal is extended at both ends by odd reflection so the edges see
    the full filter; output sample ``i`` corresponds to input sample
    ``i * decimation_factor``.
    """
    x = _check_finite(x)
    if spec.is_identity:
        return x.copy()
    taps = spec.fir_taps
    m = spec.decimation_factor
    if len(x) < len(taps):
        raise InsufficientDataError(
            f"need at least {len(taps)} samples for this resampler, got {len(x)}"
        )
    d = spec.group_delay
    r = (-2 * d) % m
    padded = np.pad(x, (d + r, d), mode="reflect", reflect_type="odd")
    y = signal.upfirdn(taps, padded, up=1, down=m)
    start = (2 * d + r) // m
    return y[start : start + len(x) // m]


def epoch_signal(
    x, sample_rate_hz: float, epoch_s: float, source_channel: str = "", start_time_s: float = 0.0
) -> list[Epoch]:
    """Split into consecutive non-overlapping epochs; a partial tail is dropped."""
    x = np.asarray(x, dtype=float)
    n = epoch_s * sample_rate_hz
    if epoch_s <= 0 or abs(n - round(n)) > 1e-9:
        raise InvalidSpecError(f"{epoch_s} s at {sample_rate_hz} Hz is not a whole number of samples")
    n = int(round(n))
    return [
        Epoch(x[i * n : (i + 1) * n], sample_rate_hz, epoch_s, source_channel, start_time_s + i * epoch_s)
        for i in range(len(x) // n)
    ]
