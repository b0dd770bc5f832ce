"""Arousal-level estimation from the 30-45 Hz multitaper spectral slope of single-channel EEG."""

__version__ = "0.1.0"

from .classifier import (  # noqa: E402
    DEFAULT_THRESHOLDS,
    Arousal,
    RawStage,
    Stage,
    Thresholds,
    classify_binary_arousal,
    classify_slope,
    evaluate,
)
from .dpss import TaperParams, TaperSet, compute_tapers, concentration_of, sparsify_tapers  # noqa: E402
from .filters import (  # noqa: E402
    Epoch,
    design_antialias_fir,
    design_butterworth_lowpass,
    epoch_signal,
    filter_signal,
    resample,
)
from .multitaper import PsdEstimate, modified_periodogram, multitaper_psd  # noqa: E402
from .pipeline import Pipeline, PipelineConfig  # noqa: E402
from .slope import SlopeFeature, slope_of_epoch, spectral_slope  # noqa: E402
