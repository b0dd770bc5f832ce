"""Spectral slope: straight-line fit of log10 power against log10 frequency."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrumError, InsufficientBandError
from .multitaper import PsdEstimate, multitaper_psd

__all__ = ["SlopeFeature", "FIT_BAND_HZ", "spectral_slope", "slope_of_epoch", "features_to_csv"]

FIT_BAND_HZ = (30.0, 45.0)
MIN_BINS = 3


@dataclass(frozen=True)
class SlopeFeature:
    slope: float
    intercept: float  # log10 power at f = 1 Hz
    fit_band_hz: tuple[float, float]
    n_bins: int
    residual_rms: float


def spectral_slope(psd: PsdEstimate, band=FIT_BAND_HZ) -> SlopeFeature:
    """Ordinary least-squares line through (log10 f, log10 P) for lo <= f <= hi."""
    lo, hi = band
    f = psd.freqs_hz
    if f.size == 0 or lo < f[0] or hi > f[-1]:
        raise InsufficientBandError(
            f"fit band {lo}-{hi} Hz is not inside the PSD grid "
            f"{f[0] if f.size else float('nan'):g}-{f[-1] if f.size else float('nan'):g} Hz"
        )
    m = (f >= lo) & (f <= hi)
    n = int(m.sum())
    if n < MIN_BINS:
        raise InsufficientBandError(f"only {n} bins in {lo}-{hi} Hz, need {MIN_BINS}")
    p = psd.power[m]
    if np.any(p <= 0) or not np.all(np.isfinite(p)):
        raise DegenerateSpectrumError(f"non-positive power in {lo}-{hi} Hz; log undefined")

    lx = np.log10(f[m])
    ly = np.log10(p)
    # centred normal equations keep the residuals orthogonal to the regressor
    mx, my = lx.mean(), ly.mean()
    dx = lx - mx
    slope = float(np.dot(dx, ly - my) / np.dot(dx, dx))
    intercept = float(my - slope * mx)
    resid = ly - (slope * lx + intercept)
    return SlopeFeature(slope, intercept, (float(lo), float(hi)), n, float(np.sqrt(np.mean(resid**2))))


def slope_of_epoch(epoch, tapers, band=FIT_BAND_HZ) -> SlopeFeature:
    return spectral_slope(multitaper_psd(epoch, tapers, band=None), band)


def features_to_csv(rows) -> str:
    """``rows`` is an iterable of (epoch_start_s, SlopeFeature)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch_start_s", "slope", "intercept", "residual_rms"])
    for start, feat in rows:
        w.writerow([f"{start:g}", repr(feat.slope), repr(feat.intercept), repr(feat.residual_rms)])
    return buf.getvalue()
