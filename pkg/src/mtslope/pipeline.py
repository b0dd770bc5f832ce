"""End-to-end pipeline: channel selection, resampling, low-pass, epoching,
multitaper PSD, slope fit and threshold classification."""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import DEFAULT_THRESHOLDS, Stage, Thresholds, classify_slope, evaluate
from .dpss import TaperParams, TaperSet, cached_tapers, sparsify_tapers
from .errors import InvalidSpecError, NoDataError, ParseError
from .filters import Epoch, design_antialias_fir, design_butterworth_lowpass, epoch_signal, filter_signal, resample
from .hypnogram import Hypnogram, align_labels
from .multitaper import multitaper_psd
from .slope import FIT_BAND_HZ, SlopeFeature, spectral_slope

__all__ = ["PipelineConfig", "EpochResult", "Pipeline", "load_config_file", "resolve_config", "CONFIG_ENV_VAR"]

CONFIG_ENV_VAR = "MTSLOPE_CONFIG"


@dataclass(frozen=True)
class PipelineConfig:
    """Pipeline parameters; defaults reproduce the sleep-EEG setup."""

    channel_label: str = "Cz"
    epoch_s: float = 30.0
    target_rate_hz: float = 200.0
    nw_smoothing_hz: float = 0.5
    n_tapers: int | None = None
    fit_band_hz: tuple = FIT_BAND_HZ
    thresholds: Thresholds = DEFAULT_THRESHOLDS
    sparsify_epsilon: float = 0.0
    filter_order: int = 10
    filter_cutoff_hz: float = 50.0
    zero_phase: bool = False
    taper_cache_dir: str | None = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "fit_band_hz", tuple(float(v) for v in self.fit_band_hz))
        nyq = self.target_rate_hz / 2
        if self.target_rate_hz <= 0:
            raise InvalidSpecError("target rate must be positive")
        if not 0 < self.filter_cutoff_hz < nyq:
            raise InvalidSpecError(f"filter cutoff must lie in (0, {nyq}) Hz")
        if int(self.filter_order) != self.filter_order or self.filter_order < 1:
            raise InvalidSpecError("filter order must be a positive integer")
        lo, hi = self.fit_band_hz
        if not 0 < lo < hi <= nyq:
            raise InvalidSpecError(f"fit band {lo}-{hi} Hz must satisfy 0 < lo < hi <= {nyq}")
        if self.sparsify_epsilon < 0:
            raise InvalidSpecError("sparsify epsilon must be >= 0")
        if int(self.threads) != self.threads or self.threads < 1:
            raise InvalidSpecError("threads must be a positive integer")
        if not self.channel_label:
            raise InvalidSpecError("channel label must not be empty")
        params = self.taper_params  # validates epoch length and taper count
        if (hi - lo) * params.n_samples / self.target_rate_hz < 2:
            raise InvalidSpecError("fit band spans fewer than 3 frequency bins")

    @property
    def nw(self) -> float:
        return self.epoch_s * self.nw_smoothing_hz

    @property
    def taper_params(self) -> TaperParams:
        return TaperParams.from_smoothing(self.epoch_s, self.nw_smoothing_hz, self.target_rate_hz, self.n_tapers)

    @property
    def derived_n_tapers(self) -> int:
        return self.taper_params.n_tapers

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["thresholds"] = {"wake_cut": self.thresholds.wake_cut, "rem_cut": self.thresholds.rem_cut}
        d["fit_band_hz"] = list(self.fit_band_hz)
        d["n_tapers"] = self.derived_n_tapers
        return d

    @classmethod
    def from_mapping(cls, values: dict, base: "PipelineConfig | None" = None) -> "PipelineConfig":
        """Overlay string or typed values (config-file keys) on ``base``."""
        base = base or cls()
        changes = {}
        th = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            if raw is None:
                continue
            if key in ("wake_cut", "rem_cut"):
                th[key] = float(raw)
            elif key == "fit_band_hz":
                if isinstance(raw, str):
                    raw = [float(v) for v in raw.replace(",", " ").split()]
                changes[key] = tuple(float(v) for v in raw)
            elif key in types:
                changes[key] = _coerce(key, raw)
            else:
                raise InvalidSpecError(f"unknown configuration key {key!r}")
        if th:
            changes["thresholds"] = Thresholds(th.get("wake_cut", base.thresholds.wake_cut),
                                               th.get("rem_cut", base.thresholds.rem_cut))
        return dataclasses.replace(base, **changes)


_INT_KEYS = {"n_tapers", "filter_order", "threads"}
_FLOAT_KEYS = {"epoch_s", "target_rate_hz", "nw_smoothing_hz", "sparsify_epsilon", "filter_cutoff_hz"}


def _coerce(key, raw):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key == "zero_phase":
            if isinstance(raw, str):
                if raw.strip().lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(raw)
                return raw.strip().lower() in ("true", "1", "yes")
            return bool(raw)
    except ValueError:
        raise InvalidSpecError(f"bad value for {key}: {raw!r}") from None
    return str(raw)


def load_config_file(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError("expected 'key = value'", line=lineno)
        out[key.strip()] = value.strip()
    return out


@dataclass(frozen=True)
class EpochResult:
    index: int
    start_time_s: float
    feature: SlopeFeature
    stage: Stage

    @property
    def slope(self) -> float:
        return self.feature.slope


@dataclass
class Pipeline:
    config: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        c = self.config
        self.cascade = design_butterworth_lowpass(c.filter_order, c.filter_cutoff_hz, c.target_rate_hz)
        self._tapers = None

    @property
    def tapers(self) -> TaperSet:
        if self._tapers is None:
            ts = cached_tapers(self.config.taper_params, self.config.taper_cache_dir)
            if self.config.sparsify_epsilon > 0:
                ts = sparsify_tapers(ts, self.config.sparsify_epsilon)
            self._tapers = ts
        return self._tapers

    def preprocess(self, x, sample_rate_hz: float) -> np.ndarray:
        """Resample to the target rate (if needed) and apply the low-pass."""
        x = np.asarray(x, dtype=float)
        if sample_rate_hz != self.config.target_rate_hz:
            x = resample(design_antialias_fir(sample_rate_hz, self.config.target_rate_hz), x)
        return filter_signal(self.cascade, x, zero_phase=self.config.zero_phase)

    def epochs(self, recording) -> list[Epoch]:
        ch = recording.channel(self.config.channel_label)
        if len(ch.samples) == 0:
            raise NoDataError(f"channel {ch.label!r} has no samples")
        x = self.preprocess(ch.samples, ch.sample_rate_hz)
        eps = epoch_signal(x, self.config.target_rate_hz, self.config.epoch_s, ch.label)
        if not eps:
            raise NoDataError(
                f"channel {ch.label!r} is shorter than one {self.config.epoch_s:g} s epoch"
            )
        return eps

    def analyze_epoch(self, epoch: Epoch, index: int = 0) -> EpochResult:
        psd = multitaper_psd(epoch, self.tapers, band=None)
        feat = spectral_slope(psd, self.config.fit_band_hz)
        return EpochResult(index, epoch.start_time_s, feat, classify_slope(feat.slope, self.config.thresholds))

    def analyze_epochs(self, epochs) -> list[EpochResult]:
        epochs = list(epochs)
        self.tapers  # build once before fanning out
        if self.config.threads == 1 or len(epochs) < 2:
            return [self.analyze_epoch(e, i) for i, e in enumerate(epochs)]
        with ThreadPoolExecutor(self.config.threads) as pool:
            return list(pool.map(self.analyze_epoch, epochs, range(len(epochs))))

    def run(self, recording) -> list[EpochResult]:
        return self.analyze_epochs(self.epochs(recording))

    def evaluate(self, recording, hypnogram: Hypnogram, **kw):
        """Returns (Evaluation, per-epoch results, aligned raw labels)."""
        eps = self.epochs(recording)
        results = self.analyze_epochs(eps)
        labels = align_labels(hypnogram, eps)
        ev = evaluate([r.stage for r in results], labels, **kw)
        return ev, results, labels


def resolve_config(cli_values: dict, config_path=None) -> PipelineConfig:
    """CLI flags over config file over defaults; the file path may come from the environment."""
    path = config_path or os.environ.get(CONFIG_ENV_VAR)
    cfg = PipelineConfig()
    if path:
        cfg = PipelineConfig.from_mapping(load_config_file(path), cfg)
    return PipelineConfig.from_mapping(cli_values, cfg)
