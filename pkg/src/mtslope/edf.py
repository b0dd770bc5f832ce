"""EDF reader/writer and a plain-CSV alternative.

EDF layout: a 256-byte ASCII main header, 256 bytes of per-signal header
fields (stored field-major), then data records of interleaved little-endian
int16 samples. Digital values map to physical units by the linear map
fixed by the digital and physical extremes. EDF+ annotation records are
not interpreted.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CalibrationError, ChannelNotFoundError, InvalidInputError, NoDataError, ParseError

__all__ = [
    "Channel",
    "Recording",
    "parse_edf",
    "write_edf",
    "read_edf",
    "parse_csv_recording",
    "write_csv_recording",
    "read_recording",
]

DIGITAL_MIN = -32768
DIGITAL_MAX = 32767

_MAIN_FIELDS = [  # (name, width)
    ("version", 8), ("patient", 80), ("recording", 80), ("startdate", 8), ("starttime", 8),
    ("header_bytes", 8), ("reserved", 44), ("n_records", 8), ("record_duration", 8), ("n_signals", 4),
]
_SIGNAL_FIELDS = [
    ("label", 16), ("transducer", 80), ("physical_dimension", 8), ("physical_min", 8),
    ("physical_max", 8), ("digital_min", 8), ("digital_max", 8), ("prefilter", 80),
    ("samples_per_record", 8), ("reserved", 32),
]


def _calibrate(digital, dmin, dmax, pmin, pmax):
    # convex form: digital extremes land exactly on the physical extremes
    t = (np.asarray(digital, dtype=float) - dmin) / (dmax - dmin)
    return pmin * (1.0 - t) + pmax * t


def _fmt_num(x, width=8):
    if float(x).is_integer() and abs(x) < 10 ** (width - 1):
        s = str(int(x))
    else:
        for prec in range(width, 0, -1):
            s = f"{x:.{prec}g}"
            if len(s) <= width:
                break
    if len(s) > width:
        raise InvalidInputError(f"{x!r} does not fit an {width}-character EDF field")
    return s


def _edf_range(x):
    """Physical extremes enclosing ``x`` that survive 8-character formatting."""
    lo, hi = float(np.min(x)), float(np.max(x))
    if lo == hi:
        lo, hi = lo - 1.0, hi + 1.0
    mag = max(abs(lo), abs(hi))
    step = 10.0 ** (math.floor(math.log10(mag)) - 4)
    lo_r = float(_fmt_num(math.floor(lo / step) * step))
    hi_r = float(_fmt_num(math.ceil(hi / step) * step))
    while lo_r > lo:
        lo_r = float(_fmt_num(lo_r - step))
    while hi_r < hi:
        hi_r = float(_fmt_num(hi_r + step))
    return lo_r, hi_r


@dataclass(frozen=True)
class Channel:
    """One signal in physical units, with the calibration that produced it.

    ``digital`` is None for channels that never went through a 16-bit
    container (e.g. loaded from CSV); writing such a channel to EDF
    quantizes it.
    """

    label: str
    sample_rate_hz: float
    samples: np.ndarray = field(repr=False)
    digital: np.ndarray | None = field(default=None, repr=False)
    physical_min: float | None = None
    physical_max: float | None = None
    digital_min: int = DIGITAL_MIN
    digital_max: int = DIGITAL_MAX
    physical_dimension: str = "uV"
    transducer: str = ""
    prefilter: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.digital is not None:
            d = np.asarray(self.digital, dtype=np.int16)
            d.setflags(write=False)
            object.__setattr__(self, "digital", d)

    @classmethod
    def from_digital(cls, label, sample_rate_hz, digital, physical_min, physical_max,
                     digital_min=DIGITAL_MIN, digital_max=DIGITAL_MAX, **meta):
        if physical_min == physical_max:
            raise CalibrationError(f"channel {label!r}: physical minimum equals maximum ({physical_min})")
        if digital_min == digital_max:
            raise CalibrationError(f"channel {label!r}: digital minimum equals maximum ({digital_min})")
        phys = _calibrate(digital, digital_min, digital_max, physical_min, physical_max)
        return cls(label, sample_rate_hz, phys, digital, physical_min, physical_max,
                   digital_min, digital_max, **meta)

    @classmethod
    def quantized(cls, label, sample_rate_hz, samples, **meta):
        """16-bit quantized copy of a physical signal."""
        x = np.asarray(samples, dtype=float)
        if x.size and not np.all(np.isfinite(x)):
            raise InvalidInputError(f"channel {label!r} contains non-finite samples")
        pmin, pmax = _edf_range(x) if x.size else (-1.0, 1.0)
        span = DIGITAL_MAX - DIGITAL_MIN
        d = np.rint((x - pmin) / (pmax - pmin) * span + DIGITAL_MIN)
        d = np.clip(d, DIGITAL_MIN, DIGITAL_MAX).astype(np.int16)
        return cls.from_digital(label, sample_rate_hz, d, pmin, pmax, **meta)


@dataclass(frozen=True)
class Recording:
    channels: tuple
    start_time: dt.datetime = dt.datetime(2000, 1, 1)
    header: dict = field(default_factory=dict)  # patient / recording / reserved strings
    record_duration_s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.channels]

    def channel(self, label: str) -> Channel:
        for c in self.channels:
            if c.label.strip() == label:
                return c
        raise ChannelNotFoundError(label, self.labels)

    @classmethod
    def from_physical(cls, labels, sample_rate_hz, data, record_duration_s=1.0, **kw):
        """Quantize an (n_channels, n_samples) array into an EDF-representable recording."""
        data = np.atleast_2d(np.asarray(data, dtype=float))
        chans = [Channel.quantized(lab, sample_rate_hz, row) for lab, row in zip(labels, data)]
        return cls(chans, record_duration_s=record_duration_s, **kw)


def _field(raw, start, width, name):
    try:
        return raw[start : start + width].decode("ascii").strip()
    except UnicodeDecodeError as e:
        raise ParseError(f"non-ASCII bytes in header field {name!r}", offset=start + e.start) from None


def _number(text, start, name, kind=float):
    try:
        v = kind(text) if kind is float else int(text)
    except ValueError:
        if kind is int:
            try:
                f = float(text)
                if f.is_integer():
                    return int(f)
            except ValueError:
                pass
        raise ParseError(f"header field {name!r} is not numeric: {text!r}", offset=start) from None
    return v


def _parse_start(date, time):
    try:
        d, m, y = (int(p) for p in date.split("."))
        hh, mm, ss = (int(p) for p in time.split("."))
        year = 1900 + y if y >= 85 else 2000 + y
        return dt.datetime(year, m, d, hh, mm, ss)
    except ValueError:
        return None


def parse_edf(data: bytes) -> Recording:
    data = bytes(data)
    if len(data) < 256:
        raise ParseError("file shorter than the 256-byte EDF header", offset=len(data))
    pos = 0
    main = {}
    offsets = {}
    for name, width in _MAIN_FIELDS:
        main[name] = _field(data, pos, width, name)
        offsets[name] = pos
        pos += width
    if main["version"] != "0":
        raise ParseError(f"unsupported EDF version {main['version']!r}", offset=0)
    ns = _number(main["n_signals"], offsets["n_signals"], "n_signals", int)
    n_records = _number(main["n_records"], offsets["n_records"], "n_records", int)
    duration = _number(main["record_duration"], offsets["record_duration"], "record_duration")
    header_bytes = _number(main["header_bytes"], offsets["header_bytes"], "header_bytes", int)
    if ns < 1:
        raise ParseError(f"EDF declares {ns} signals", offset=offsets["n_signals"])
    if header_bytes != 256 * (ns + 1):
        raise ParseError(f"header size {header_bytes} inconsistent with {ns} signals",
                         offset=offsets["header_bytes"])
    if len(data) < header_bytes:
        raise ParseError("truncated signal header", offset=len(data))

    sig = {}
    for name, width in _SIGNAL_FIELDS:
        vals = []
        for i in range(ns):
            text = _field(data, pos, width, name)
            if name in ("physical_min", "physical_max"):
                text = _number(text, pos, f"{name}[{i}]")
            elif name in ("digital_min", "digital_max", "samples_per_record"):
                text = _number(text, pos, f"{name}[{i}]", int)
            vals.append(text)
            pos += width
        sig[name] = vals

    spr = np.asarray(sig["samples_per_record"])
    if np.any(spr < 1):
        raise ParseError("samples per record must be positive", offset=256 + ns * 216)
    record_samples = int(spr.sum())
    record_bytes = 2 * record_samples
    payload = len(data) - header_bytes
    if n_records == -1:
        n_records = payload // record_bytes
    elif n_records < 0:
        raise ParseError(f"invalid record count {n_records}", offset=offsets["n_records"])
    needed = n_records * record_bytes
    if payload < needed:
        raise ParseError(
            f"data truncated: {n_records} records need {needed} bytes, found {payload}",
            offset=header_bytes + (payload // record_bytes) * record_bytes,
        )
    if duration <= 0:
        raise ParseError("record duration must be positive", offset=offsets["record_duration"])

    raw = np.frombuffer(data, dtype="<i2", count=n_records * record_samples, offset=header_bytes)
    raw = raw.reshape(n_records, record_samples)
    bounds = np.concatenate(([0], np.cumsum(spr)))
    chans = []
    for i in range(ns):
        digital = raw[:, bounds[i] : bounds[i + 1]].reshape(-1).astype(np.int16)
        chans.append(Channel.from_digital(
            sig["label"][i], spr[i] / duration, digital,
            sig["physical_min"][i], sig["physical_max"][i],
            sig["digital_min"][i], sig["digital_max"][i],
            physical_dimension=sig["physical_dimension"][i],
            transducer=sig["transducer"][i], prefilter=sig["prefilter"][i],
        ))
    start = _parse_start(main["startdate"], main["starttime"]) or dt.datetime(1985, 1, 1)
    header = {"patient": main["patient"], "recording": main["recording"], "reserved": main["reserved"]}
    return Recording(chans, start, header, duration)


def _ascii(text, width):
    b = str(text).encode("ascii", errors="replace")
    if len(b) > width:
        b = b[:width]
    return b.ljust(width, b" ")


def write_edf(recording: Recording) -> bytes:
    chans = list(recording.channels)
    if not chans:
        raise NoDataError("recording has no channels")
    chans = [c if c.digital is not None else Channel.quantized(
        c.label, c.sample_rate_hz, c.samples, physical_dimension=c.physical_dimension,
        transducer=c.transducer, prefilter=c.prefilter) for c in chans]
    dur = recording.record_duration_s
    spr = []
    for c in chans:
        n = c.sample_rate_hz * dur
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise InvalidInputError(f"channel {c.label!r}: {c.sample_rate_hz} Hz x {dur} s is not a whole sample count")
        spr.append(int(round(n)))
    n_records = {len(c.digital) // s for c, s in zip(chans, spr)}
    if len(n_records) != 1 or any(len(c.digital) % s for c, s in zip(chans, spr)):
        raise InvalidInputError("channels do not divide into the same whole number of data records")
    n_records = n_records.pop()
    ns = len(chans)
    t = recording.start_time
    h = recording.header
    out = bytearray()
    out += _ascii("0", 8)
    out += _ascii(h.get("patient", "X X X X"), 80)
    out += _ascii(h.get("recording", "Startdate X X X X"), 80)
    out += _ascii(t.strftime("%d.%m.%y"), 8)
    out += _ascii(t.strftime("%H.%M.%S"), 8)
    out += _ascii(256 * (ns + 1), 8)
    out += _ascii(h.get("reserved", ""), 44)
    out += _ascii(n_records, 8)
    out += _ascii(_fmt_num(dur), 8)
    out += _ascii(ns, 4)
    columns = {
        "label": [c.label for c in chans],
        "transducer": [c.transducer for c in chans],
        "physical_dimension": [c.physical_dimension for c in chans],
        "physical_min": [_fmt_num(c.physical_min) for c in chans],
        "physical_max": [_fmt_num(c.physical_max) for c in chans],
        "digital_min": [c.digital_min for c in chans],
        "digital_max": [c.digital_max for c in chans],
        "prefilter": [c.prefilter for c in chans],
        "samples_per_record": spr,
        "reserved": [""] * ns,
    }
    for name, width in _SIGNAL_FIELDS:
        for v in columns[name]:
            out += _ascii(v, width)
    records = np.concatenate(
        [c.digital.reshape(n_records, s) for c, s in zip(chans, spr)], axis=1
    )
    out += records.astype("<i2").tobytes()
    return bytes(out)


def read_edf(path) -> Recording:
    return parse_edf(Path(path).read_bytes())


def parse_csv_recording(text: str) -> Recording:
    """CSV with a ``# sample_rate_hz=<rate>`` comment line, a label header row, one column per channel."""
    lines = text.splitlines()
    rate = None
    body = []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("#"):
            key, _, val = s[1:].partition("=")
            if key.strip() == "sample_rate_hz":
                try:
                    rate = float(val)
                except ValueError:
                    raise ParseError(f"bad sample rate {val.strip()!r}", line=lineno) from None
            continue
        if s:
            body.append((lineno, line))
    if rate is None or rate <= 0:
        raise ParseError("missing '# sample_rate_hz=<rate>' line", line=1)
    if not body:
        raise ParseError("missing header row", line=len(lines))
    reader = csv.reader([b for _, b in body])
    labels = [lab.strip() for lab in next(reader)]
    rows = []
    for (lineno, _), row in zip(body[1:], reader):
        if len(row) != len(labels):
            raise ParseError(f"expected {len(labels)} columns, got {len(row)}", line=lineno)
        try:
            rows.append([float(v) for v in row])
        except ValueError:
            raise ParseError("non-numeric sample", line=lineno) from None
    data = np.array(rows, dtype=float).reshape(-1, len(labels)).T
    return Recording([Channel(lab, rate, row) for lab, row in zip(labels, data)])


def write_csv_recording(recording: Recording) -> str:
    rates = {c.sample_rate_hz for c in recording.channels}
    lengths = {len(c.samples) for c in recording.channels}
    if len(rates) != 1 or len(lengths) != 1:
        raise InvalidInputError("CSV output needs channels with one shared rate and length")
    buf = io.StringIO()
    buf.write(f"# sample_rate_hz={rates.pop():g}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(recording.labels)
    for row in np.column_stack([c.samples for c in recording.channels]):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def read_recording(path) -> Recording:
    """Dispatch on suffix: ``.csv`` as CSV, anything else as EDF."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return parse_csv_recording(path.read_text(encoding="utf-8"))
    return read_edf(path)
