"""Hypnogram CSV sidecars (``onset_s,duration_s,stage``) and epoch alignment."""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass

from .classifier import RawStage
from .errors import ParseError, StructureError

__all__ = ["HypnogramEntry", "Hypnogram", "parse_hypnogram_csv", "hypnogram_to_csv", "align_labels"]

HEADER = ["onset_s", "duration_s", "stage"]
_TOKENS = {"W": RawStage.WAKE, "N1": RawStage.N1, "N2": RawStage.N2, "N3": RawStage.N3,
           "N4": RawStage.N4, "R": RawStage.REM}


@dataclass(frozen=True)
class HypnogramEntry:
    onset_s: float
    duration_s: float
    stage: RawStage

    @property
    def end_s(self) -> float:
        return self.onset_s + self.duration_s


@dataclass(frozen=True)
class Hypnogram:
    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        for i, e in enumerate(entries):
            if e.duration_s <= 0:
                raise StructureError(f"entry {i} has non-positive duration {e.duration_s}")
            if i and e.onset_s < entries[i - 1].end_s:
                raise StructureError(
                    f"entry {i} at {e.onset_s} s overlaps or precedes the previous span ending at {entries[i - 1].end_s} s"
                )
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_onsets", [e.onset_s for e in entries])

    def __len__(self):
        return len(self.entries)

    def stage_at(self, t_s: float) -> RawStage:
        i = bisect.bisect_right(self._onsets, t_s) - 1
        if i >= 0 and t_s < self.entries[i].end_s:
            return self.entries[i].stage
        return RawStage.UNKNOWN


def parse_hypnogram_csv(text: str) -> Hypnogram:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != HEADER:
        raise ParseError(f"hypnogram header must be {','.join(HEADER)}", line=1)
    entries = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
        onset, duration, token = (c.strip() for c in row)
        try:
            onset, duration = float(onset), float(duration)
        except ValueError:
            raise ParseError("onset and duration must be numbers", line=lineno) from None
        if token not in _TOKENS:
            raise ParseError(f"unknown stage {token!r} (expected one of {', '.join(_TOKENS)})", line=lineno)
        entries.append(HypnogramEntry(onset, duration, _TOKENS[token]))
    return Hypnogram(entries)


def hypnogram_to_csv(hypnogram: Hypnogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for e in hypnogram.entries:
        w.writerow([f"{e.onset_s:g}", f"{e.duration_s:g}", e.stage.value])
    return buf.getvalue()


def align_labels(hypnogram: Hypnogram, epochs) -> list[RawStage]:
    """One label per epoch: the span containing the epoch start, else UNKNOWN."""
    return [hypnogram.stage_at(ep.start_time_s) for ep in epochs]
