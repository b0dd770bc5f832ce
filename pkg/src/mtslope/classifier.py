"""Threshold classification of spectral slopes and confusion-matrix evaluation."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, InvalidInputError, InvalidSpecError, NoDataError

__all__ = [
    "Stage",
    "RawStage",
    "Arousal",
    "Thresholds",
    "DEFAULT_THRESHOLDS",
    "ConfusionMatrix",
    "Evaluation",
    "classify_slope",
    "classify_binary_arousal",
    "merge_stage",
    "evaluate",
    "per_epoch_csv",
]


class Stage(str, enum.Enum):
    WAKE = "Wake"
    NREM3 = "NREM3"
    REM = "REM"


class RawStage(str, enum.Enum):
    """Hypnogram annotation values before merging."""

    WAKE = "W"
    N1 = "N1"
    N2 = "N2"
    N3 = "N3"
    N4 = "N4"
    REM = "R"
    UNKNOWN = "?"


class Arousal(str, enum.Enum):
    WAKE = "Wake"
    REDUCED = "ReducedArousal"


@dataclass(frozen=True)
class Thresholds:
    wake_cut: float = -2.45
    rem_cut: float = -3.2

    def __post_init__(self):
        if not (math.isfinite(self.wake_cut) and math.isfinite(self.rem_cut)):
            raise InvalidSpecError("thresholds must be finite")
        if not self.rem_cut < self.wake_cut:
            raise InvalidSpecError(f"rem_cut ({self.rem_cut}) must be below wake_cut ({self.wake_cut})")


DEFAULT_THRESHOLDS = Thresholds()


def _check_slope(slope):
    if slope is None or not math.isfinite(slope):
        raise InvalidInputError(f"slope must be finite, got {slope!r}")


def classify_slope(slope: float, th: Thresholds = DEFAULT_THRESHOLDS) -> Stage:
    """Wake above ``wake_cut``, REM below ``rem_cut``, NREM3 otherwise (ties included)."""
    _check_slope(slope)
    if slope > th.wake_cut:
        return Stage.WAKE
    if slope < th.rem_cut:
        return Stage.REM
    return Stage.NREM3


def classify_binary_arousal(slope: float, th: Thresholds = DEFAULT_THRESHOLDS) -> Arousal:
    _check_slope(slope)
    return Arousal.WAKE if slope > th.wake_cut else Arousal.REDUCED


_THREE_WAY = {RawStage.WAKE: Stage.WAKE, RawStage.N3: Stage.NREM3, RawStage.N4: Stage.NREM3,
              RawStage.REM: Stage.REM}


def merge_stage(raw: RawStage, task: str = "three-way", light_sleep: str = "exclude"):
    """Map an annotation onto the evaluation label set, or None to exclude it.

    N3 and N4 merge into NREM3. Light sleep (N1/N2) is excluded unless
    ``task="binary"`` and ``light_sleep="reduced"``.
    """
    raw = RawStage(raw)
    if raw is RawStage.UNKNOWN:
        return None
    if task == "three-way":
        return _THREE_WAY.get(raw)
    if task == "binary":
        if raw is RawStage.WAKE:
            return Arousal.WAKE
        if raw in (RawStage.N1, RawStage.N2):
            return Arousal.REDUCED if light_sleep == "reduced" else None
        return Arousal.REDUCED
    raise InvalidSpecError(f"unknown task {task!r}")


@dataclass
class ConfusionMatrix:
    """Counts indexed (true, predicted); mergeable with ``+``."""

    labels: tuple
    counts: np.ndarray = None

    def __post_init__(self):
        self.labels = tuple(self.labels)
        if self.counts is None:
            self.counts = np.zeros((len(self.labels),) * 2, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)

    @classmethod
    def for_stages(cls):
        return cls(tuple(Stage))

    def add(self, true, predicted):
        self.counts[self.labels.index(true), self.labels.index(predicted)] += 1

    def __add__(self, other):
        if self.labels != other.labels:
            raise InvalidInputError("cannot merge confusion matrices over different labels")
        return ConfusionMatrix(self.labels, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def empty_rows(self) -> list:
        return [lab for lab, row in zip(self.labels, self.counts) if row.sum() == 0]

    @property
    def normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def cell(self, true, predicted, normalized=True) -> float:
        m = self.normalized if normalized else self.counts
        return float(m[self.labels.index(true), self.labels.index(predicted)])


@dataclass
class Evaluation:
    confusion: ConfusionMatrix
    excluded: dict = field(default_factory=dict)
    note: str = ""

    @property
    def accuracy(self) -> float:
        return self.confusion.accuracy

    def as_dict(self):
        labels = [lab.value for lab in self.confusion.labels]
        out = {
            "labels": labels,
            "counts": self.confusion.counts.tolist(),
            "normalized": self.confusion.normalized.tolist(),
            "accuracy": self.accuracy,
            "n_epochs": self.confusion.total,
            "empty_rows": [lab.value for lab in self.confusion.empty_rows],
            "excluded": dict(sorted(self.excluded.items())),
        }
        if self.note:
            out["note"] = self.note
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def evaluate(predictions, annotations, task: str = "three-way", light_sleep: str = "exclude",
             note: str = "") -> Evaluation:
    """Confusion matrix over epochs whose annotation survives merging.

    ``predictions`` and ``annotations`` run over the same epochs. Excluded
    annotations are tallied by raw value in ``Evaluation.excluded``.
    """
    predictions = list(predictions)
    annotations = [RawStage(a) for a in annotations]
    if len(predictions) != len(annotations):
        raise AlignmentError(f"{len(predictions)} predictions for {len(annotations)} annotated epochs")
    cm = ConfusionMatrix(tuple(Stage) if task == "three-way" else tuple(Arousal))
    excluded = Counter()
    for pred, raw in zip(predictions, annotations):
        true = merge_stage(raw, task, light_sleep)
        if true is None:
            excluded[raw.value] += 1
            continue
        cm.add(true, pred)
    if cm.total == 0:
        raise NoDataError("no epochs left to evaluate after excluding unscored/light-sleep annotations")
    return Evaluation(cm, dict(excluded), note)


def per_epoch_csv(rows) -> str:
    """``rows``: iterable of (start_s, slope, predicted, annotated-or-None)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch_start_s", "slope", "predicted", "annotated"])
    for start, slope, pred, ann in rows:
        w.writerow([f"{start:g}", repr(float(slope)), pred.value, "" if ann is None else RawStage(ann).value])
    return buf.getvalue()
