"""Multitaper power spectral density.

Each taper gives a modified periodogram ``dt * |sum_n g_k(n) x(n) e^{-j2 pi f n dt}|^2``
evaluated on the real-FFT grid; the estimate is their plain average. Spectra
are one-sided (interior bins doubled), so the PSD integrated over
[0, Fs/2] recovers the mean-square of the tapered signal.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .dpss import TaperSet
from .errors import InvalidInputError
from .filters import Epoch

__all__ = [
    "PsdEstimate",
    "Periodogram",
    "ANALYSIS_BAND_HZ",
    "modified_periodogram",
    "multitaper_psd",
    "psd_to_csv",
    "psd_to_json",
]

ANALYSIS_BAND_HZ = (0.5, 45.0)


def _frozen(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PsdEstimate:
    freqs_hz: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)
    n_tapers_used: int
    epoch_ref: str
    delta_t_s: float

    def __post_init__(self):
        object.__setattr__(self, "freqs_hz", _frozen(self.freqs_hz))
        object.__setattr__(self, "power", _frozen(self.power))
        if self.freqs_hz.shape != self.power.shape:
            raise InvalidInputError("frequency and power vectors differ in length")
        if self.freqs_hz.size > 1 and np.any(np.diff(self.freqs_hz) <= 0):
            raise InvalidInputError("frequencies must be strictly increasing")
        if np.any(np.isnan(self.power)) or np.any(self.power < 0):
            raise InvalidInputError("power must be non-negative and not NaN")

    def band(self, lo_hz: float, hi_hz: float) -> "PsdEstimate":
        """Bins with lo <= f <= hi."""
        m = (self.freqs_hz >= lo_hz) & (self.freqs_hz <= hi_hz)
        return PsdEstimate(self.freqs_hz[m], self.power[m], self.n_tapers_used, self.epoch_ref, self.delta_t_s)

    def integrate(self, lo_hz: float = 0.0, hi_hz: float = np.inf, include_lo: bool = True) -> float:
        """Rectangle-rule integral over grid bins in the interval."""
        f = self.freqs_hz
        m = ((f >= lo_hz) if include_lo else (f > lo_hz)) & (f <= hi_hz)
        if f.size < 2:
            return 0.0
        return float(self.power[m].sum() * (f[1] - f[0]))


@dataclass(frozen=True)
class Periodogram:
    taper_index: int
    freqs_hz: np.ndarray = field(repr=False)
    power: np.ndarray = field(repr=False)


def _samples_and_dt(epoch, delta_t_s):
    if isinstance(epoch, Epoch):
        return np.asarray(epoch.samples), (1.0 / epoch.sample_rate_hz if delta_t_s is None else delta_t_s)
    x = np.asarray(epoch, dtype=float)
    if delta_t_s is None:
        raise InvalidInputError("delta_t_s is required for bare sample arrays")
    return x, delta_t_s


def _onesided_scale(nfft):
    scale = np.full(nfft // 2 + 1, 2.0)
    scale[0] = 1.0
    if nfft % 2 == 0:
        scale[-1] = 1.0
    return scale


def _tapered_power(x, taper_rows, dt, nfft):
    spec = np.fft.rfft(taper_rows * x, n=nfft, axis=-1)
    p = spec.real**2 + spec.imag**2
    p *= dt
    p *= _onesided_scale(nfft)
    return p


def modified_periodogram(epoch, taper, delta_t_s: float | None = None, taper_index: int = 0,
                         nfft: int | None = None) -> Periodogram:
    """One-sided modified periodogram of ``epoch`` with a single taper.

    The samples are used as given (no mean removal); ``delta_t_s`` defaults to
    the epoch's sampling interval.
    """
    x, dt = _samples_and_dt(epoch, delta_t_s)
    g = np.asarray(taper, dtype=float)
    if g.shape != x.shape:
        raise InvalidInputError(f"taper length {g.shape} does not match epoch length {x.shape}")
    nfft = nfft or len(x)
    return Periodogram(taper_index, np.fft.rfftfreq(nfft, dt), _tapered_power(x, g, dt, nfft))


def multitaper_psd(epoch: Epoch, tapers: TaperSet, band=ANALYSIS_BAND_HZ, detrend: bool = True,
                   nfft: int | None = None) -> PsdEstimate:
    """Average of the K modified periodograms.

    ``band=None`` keeps the full [0, Fs/2] grid. The epoch mean is removed
    first unless ``detrend`` is False. ``nfft`` > N zero-pads.
    """
    x, dt = _samples_and_dt(epoch, None)
    n = len(x)
    if tapers.n_samples != n:
        raise InvalidInputError(f"tapers have length {tapers.n_samples}, epoch has {n} samples")
    if detrend:
        x = x - x.mean()
    nfft = nfft or n
    if nfft < n:
        raise InvalidInputError("nfft shorter than the epoch")

    rows = tapers.dense()
    power = _tapered_power(x, rows, dt, nfft).mean(axis=0)

    ref = ""
    if isinstance(epoch, Epoch):
        ref = f"{epoch.source_channel}@{epoch.start_time_s:g}s"
    est = PsdEstimate(np.fft.rfftfreq(nfft, dt), power, tapers.n_tapers, ref, dt)
    if band is not None:
        est = est.band(*band)
    return est


def psd_to_csv(psd: PsdEstimate) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["freq_hz", "power"])
    for f, p in zip(psd.freqs_hz, psd.power):
        w.writerow([repr(float(f)), repr(float(p))])
    return buf.getvalue()


def psd_to_json(psd: PsdEstimate, **metadata) -> str:
    record = {
        "epoch_ref": psd.epoch_ref,
        "n_tapers": psd.n_tapers_used,
        "delta_t_s": psd.delta_t_s,
        **metadata,
        "freq_hz": psd.freqs_hz.tolist(),
        "power": psd.power.tolist(),
    }
    return json.dumps(record)
