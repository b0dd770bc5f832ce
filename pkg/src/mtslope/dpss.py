"""Discrete prolate spheroidal (Slepian) tapers.

Tapers are the top eigenvectors of the sinc kernel

    A[n, m] = sin(2 pi w (n - m)) / (pi (n - m)),   w = W / Fs,

whose eigenvalues are the in-band energy fractions. The kernel is dense and
badly clustered near 1, so the eigenvectors are taken from the commuting
symmetric tridiagonal matrix instead (same eigenvectors, well separated
eigenvalues), refined by one step of inverse iteration, and the concentration
of each is then measured with the kernel as a Rayleigh quotient.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal, matmul_toeplitz, solve_banded

from .errors import (
    DegradationError,
    InvalidInputError,
    InvalidSpecError,
    ParseError,
    TaperConcentrationWarning,
)

__all__ = [
    "TaperParams",
    "TaperSet",
    "SparseVector",
    "SparsityReport",
    "compute_tapers",
    "concentration_of",
    "sparsify_tapers",
    "sinc_kernel_column",
    "save_taper_cache",
    "load_taper_cache",
    "cached_tapers",
    "CACHE_MAGIC",
    "CACHE_VERSION",
    "DEFAULT_SPARSE_EPSILON",
]

MAX_ENERGY_LOSS = 0.01
# keeps the per-bin PSD change far below 1e-4 on 30 s epochs
DEFAULT_SPARSE_EPSILON = 1e-8


@dataclass(frozen=True)
class TaperParams:
    n_samples: int
    half_bandwidth_hz: float
    sample_rate_hz: float
    n_tapers: int

    def __post_init__(self):
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise InvalidSpecError(f"n_samples must be an integer >= 2, got {self.n_samples}")
        if self.sample_rate_hz <= 0:
            raise InvalidSpecError("sample rate must be positive")
        if not 0 < self.half_bandwidth_hz < self.sample_rate_hz / 2:
            raise InvalidSpecError(
                f"half bandwidth must lie in (0, {self.sample_rate_hz / 2}) Hz, got {self.half_bandwidth_hz}"
            )
        if int(self.n_tapers) != self.n_tapers or not 1 <= self.n_tapers <= self.n_samples:
            raise InvalidSpecError(f"n_tapers must be in [1, {self.n_samples}], got {self.n_tapers}")

    @classmethod
    def from_nw(cls, n_samples, nw, sample_rate_hz, n_tapers=None):
        """Build from the time-half-bandwidth product; K defaults to 2NW - 1."""
        if n_samples < 1:
            raise InvalidSpecError(f"n_samples must be positive, got {n_samples}")
        half_bw = nw * sample_rate_hz / n_samples
        if n_tapers is None:
            n_tapers = max(1, int(round(2 * nw - 1)))
        return cls(int(n_samples), half_bw, sample_rate_hz, int(n_tapers))

    @classmethod
    def from_smoothing(cls, duration_s, smoothing_hz=0.5, sample_rate_hz=200.0, n_tapers=None):
        """Epoch duration times smoothing half-bandwidth gives NW (15 for 30 s at 0.5 Hz)."""
        n = duration_s * sample_rate_hz
        if n <= 0 or abs(n - round(n)) > 1e-9:
            raise InvalidSpecError(f"{duration_s} s at {sample_rate_hz} Hz is not a positive whole number of samples")
        return cls.from_nw(int(round(n)), duration_s * smoothing_hz, sample_rate_hz, n_tapers)

    @property
    def w(self) -> float:
        """Half bandwidth in cycles per sample."""
        return self.half_bandwidth_hz / self.sample_rate_hz

    @property
    def nw(self) -> float:
        return self.n_samples * self.w

    @property
    def max_well_concentrated(self) -> int:
        return max(1, int(round(2 * self.nw - 1)))


@dataclass(frozen=True)
class SparseVector:
    """Thresholded vector stored as runs of consecutive retained elements.

    Slepian tails fall below any threshold as contiguous blocks at both
    ends, so a handful of (start, stop) pairs replaces a per-element index
    array. ``indices`` is derived from the runs.
    """

    runs: np.ndarray
    values: np.ndarray
    length: int
    truncation_epsilon: float = 0.0

    def __post_init__(self):
        runs = np.asarray(self.runs, dtype=np.int32).reshape(-1, 2)
        val = np.asarray(self.values, dtype=float)
        if runs.size:
            starts, stops = runs[:, 0], runs[:, 1]
            if (starts[0] < 0 or stops[-1] > self.length or np.any(stops <= starts)
                    or np.any(starts[1:] <= stops[:-1])):
                raise InvalidInputError("runs must be non-empty, ordered, disjoint and within [0, length)")
        if val.shape != (int((runs[:, 1] - runs[:, 0]).sum()),):
            raise InvalidInputError("values do not match the run lengths")
        runs.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "runs", runs)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_indices(cls, indices, values, length, truncation_epsilon=0.0) -> "SparseVector":
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx[0] < 0 or idx[-1] >= length or np.any(np.diff(idx) <= 0)):
            raise InvalidInputError("indices must be strictly increasing within [0, length)")
        breaks = np.flatnonzero(np.diff(idx) != 1) + 1
        starts = idx[np.concatenate(([0], breaks))] if idx.size else idx
        stops = idx[np.concatenate((breaks - 1, [idx.size - 1]))] + 1 if idx.size else idx
        return cls(np.column_stack([starts, stops]), values, length, truncation_epsilon)

    @classmethod
    def from_dense(cls, x, epsilon: float) -> "SparseVector":
        x = np.asarray(x, dtype=float)
        keep = np.flatnonzero((np.abs(x) >= epsilon) & (x != 0))
        return cls.from_indices(keep, x[keep], len(x), epsilon)

    @property
    def indices(self) -> np.ndarray:
        if not self.runs.size:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([np.arange(a, b) for a, b in self.runs])

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.length)
        pos = 0
        for a, b in self.runs:
            out[a:b] = self.values[pos : pos + b - a]
            pos += b - a
        return out

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    @property
    def density(self) -> float:
        return self.nnz / self.length

    @property
    def nbytes(self) -> int:
        return self.runs.nbytes + self.values.nbytes


@dataclass(frozen=True)
class SparsityReport:
    epsilon: float
    retained: tuple[int, ...]
    density: tuple[float, ...]
    energy_loss: tuple[float, ...]
    max_gram_deviation: float
    dense_bytes: int
    sparse_bytes: int

    def as_dict(self):
        return {
            "epsilon": self.epsilon,
            "retained": list(self.retained),
            "density": list(self.density),
            "energy_loss": list(self.energy_loss),
            "max_gram_deviation": self.max_gram_deviation,
            "dense_bytes": self.dense_bytes,
            "sparse_bytes": self.sparse_bytes,
        }


@dataclass(frozen=True)
class TaperSet:
    """K tapers of length N with their concentration eigenvalues.

    ``tapers`` is either a dense (K, N) array or, after sparsification, a
    tuple holding a SparseVector or a dense row per taper (whichever is
    smaller). Eigenvalues are Rayleigh quotients of the sinc kernel; for
    large NW the leading ones round to 1.0 in double precision.
    """

    params: TaperParams
    tapers: object = field(repr=False)
    eigenvalues: np.ndarray
    sparsity: SparsityReport | None = None

    def __post_init__(self):
        ev = np.array(self.eigenvalues, dtype=float)
        ev.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        if isinstance(self.tapers, np.ndarray):
            t = np.array(self.tapers, dtype=float)
            t.setflags(write=False)
            object.__setattr__(self, "tapers", t)
            shape = t.shape
        else:
            rows = []
            for v in self.tapers:
                if not isinstance(v, SparseVector):
                    v = np.array(v, dtype=float)
                    v.setflags(write=False)
                rows.append(v)
            object.__setattr__(self, "tapers", tuple(rows))
            lengths = {v.length if isinstance(v, SparseVector) else v.shape[0] for v in rows}
            shape = (len(rows), lengths.pop() if len(lengths) == 1 else -1)
        if shape != (self.params.n_tapers, self.params.n_samples) or ev.shape != (shape[0],):
            raise InvalidInputError(
                f"taper array {shape} / eigenvalues {ev.shape} do not match {self.params}"
            )

    @property
    def is_sparse(self) -> bool:
        return not isinstance(self.tapers, np.ndarray)

    @property
    def n_tapers(self) -> int:
        return self.params.n_tapers

    @property
    def n_samples(self) -> int:
        return self.params.n_samples

    def taper(self, k: int) -> np.ndarray:
        v = self.tapers[k]
        return v.to_dense() if isinstance(v, SparseVector) else v

    def dense(self) -> np.ndarray:
        if self.is_sparse:
            return np.vstack([self.taper(k) for k in range(self.n_tapers)])
        return self.tapers

    @property
    def nbytes(self) -> int:
        if self.is_sparse:
            return sum(v.nbytes for v in self.tapers)
        return self.tapers.nbytes

    def densities(self) -> list[float]:
        if self.sparsity is not None:
            return list(self.sparsity.density)
        return [1.0] * self.n_tapers


def sinc_kernel_column(n_samples: int, w: float) -> np.ndarray:
    """First column of the (symmetric Toeplitz) sinc kernel, w in cycles/sample."""
    m = np.arange(1, n_samples)
    return np.concatenate(([2 * w], np.sin(2 * np.pi * w * m) / (np.pi * m)))


def _rayleigh(vectors, w):
    """Kernel Rayleigh quotients for the rows of ``vectors``."""
    col = sinc_kernel_column(vectors.shape[1], w)
    av = matmul_toeplitz(col, vectors.T, check_finite=False).reshape(vectors.shape[::-1]).T
    num = np.einsum("kn,kn->k", vectors, av)
    return num / np.einsum("kn,kn->k", vectors, vectors)


def _tridiagonal(n, w):
    idx = np.arange(n)
    diag = ((n - 1 - 2 * idx) / 2.0) ** 2 * math.cos(2 * math.pi * w)
    off = idx[1:] * (n - idx[1:]) / 2.0
    return diag, off


def _fix_signs(v):
    # even tapers: positive sum; odd tapers: first lobe above the noise positive
    n = v.shape[1]
    thresh = max(1e-7, 1.0 / n)
    for k in range(v.shape[0]):
        if k % 2 == 0:
            if v[k].sum() < 0:
                v[k] *= -1
        else:
            first = v[k][v[k] ** 2 > thresh]
            if first.size and first[0] < 0:
                v[k] *= -1
    return v


def compute_tapers(params: TaperParams) -> TaperSet:
    """Top-K Slepian tapers and their concentration eigenvalues.

    Warns with :class:`TaperConcentrationWarning` when K exceeds 2NW - 1.
    """
    n, k, w = params.n_samples, params.n_tapers, params.w
    if k > params.max_well_concentrated:
        warnings.warn(
            f"{k} tapers requested but only {params.max_well_concentrated} are well concentrated "
            f"for NW={params.nw:g}",
            TaperConcentrationWarning,
            stacklevel=2,
        )
    diag, off = _tridiagonal(n, w)
    theta, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(n - k, n - 1))
    theta = theta[::-1]
    vecs = vecs[:, ::-1]

    # one inverse-iteration step per vector against the tridiagonal
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[2, :-1] = off
    scale = max(abs(theta[0]), 1.0)
    refined = np.empty((k, n))
    for i in range(k):
        shift = theta[i] + 1e-10 * scale
        ab[1] = diag - shift
        y = solve_banded((1, 1), ab, vecs[:, i], check_finite=False)
        refined[i] = y / np.linalg.norm(y)
    refined = _fix_signs(refined)

    lam = np.minimum(_rayleigh(refined, w), 1.0)
    return TaperSet(params, refined, lam)


def concentration_of(taper, half_bandwidth_hz: float, sample_rate_hz: float) -> float:
    """Fraction of the sequence's spectral energy inside [-W, W].

    Computed as the quadratic form of the sinc kernel over the sequence
    energy, which is the in-band integral of |X(f)|^2 over the full-band
    integral.
    """
    x = np.asarray(taper, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("expected a non-empty 1-D sequence")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("sequence must be finite")
    if not np.any(x):
        raise InvalidInputError("sequence has zero energy")
    if not 0 < half_bandwidth_hz <= sample_rate_hz / 2:
        raise InvalidSpecError("half bandwidth must lie in (0, Fs/2]")
    w = half_bandwidth_hz / sample_rate_hz
    return float(min(_rayleigh(x[None, :], w)[0], 1.0))


def sparsify_tapers(tapers: TaperSet, epsilon: float) -> TaperSet:
    """Store taper elements with magnitude below ``epsilon`` as structural zeros.

    Refuses with :class:`DegradationError` when any taper would lose more
    than 1% of its energy. The returned set carries a SparsityReport.
    """
    if not epsilon >= 0:
        raise InvalidSpecError(f"epsilon must be >= 0, got {epsilon}")
    dense = tapers.dense()
    dense_bytes = dense.nbytes
    if epsilon == 0:
        report = SparsityReport(
            0.0, (tapers.n_samples,) * tapers.n_tapers, (1.0,) * tapers.n_tapers,
            (0.0,) * tapers.n_tapers, 0.0, dense_bytes, dense_bytes,
        )
        return TaperSet(tapers.params, dense, tapers.eigenvalues, report)

    vectors = [SparseVector.from_dense(row, epsilon) for row in dense]
    approx = np.vstack([v.to_dense() for v in vectors])
    energy = np.einsum("kn,kn->k", dense, dense)
    loss = 1.0 - np.einsum("kn,kn->k", approx, approx) / energy
    worst = int(np.argmax(loss))
    if loss[worst] > MAX_ENERGY_LOSS:
        raise DegradationError(
            f"epsilon={epsilon:g} removes {loss[worst]:.2%} of taper {worst}'s energy "
            f"(limit {MAX_ENERGY_LOSS:.0%})"
        )
    # a taper that barely thins out stays a (thresholded) dense row
    stored = [v if v.nbytes < row.nbytes else row for v, row in zip(vectors, approx)]
    gram_dev = float(np.abs(approx @ approx.T - np.eye(len(vectors))).max())
    report = SparsityReport(
        float(epsilon),
        tuple(v.nnz for v in vectors),
        tuple(v.density for v in vectors),
        tuple(float(x) for x in loss),
        gram_dev,
        dense_bytes,
        sum(v.nbytes for v in stored),
    )
    return TaperSet(tapers.params, stored, tapers.eigenvalues, report)


# Taper cache: fixed little-endian header, then K*N float64 tapers
# (row-major) and K float64 eigenvalues.
CACHE_MAGIC = b"MTSDPSS\x00"
CACHE_VERSION = 1
_HEADER = struct.Struct("<8sIIIIdd")  # magic, version, N, K, reserved, W (Hz), Fs (Hz)


def save_taper_cache(path, tapers: TaperSet) -> Path:
    path = Path(path)
    p = tapers.params
    header = _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, p.n_samples, p.n_tapers, 0,
                          p.half_bandwidth_hz, p.sample_rate_hz)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(tapers.dense(), dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(tapers.eigenvalues, dtype="<f8").tobytes())
    tmp.replace(path)
    return path


def load_taper_cache(path) -> TaperSet:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError("taper cache shorter than its header", offset=len(data))
    magic, version, n, k, _, half_bw, fs = _HEADER.unpack_from(data)
    if magic != CACHE_MAGIC:
        raise ParseError("not a taper cache file (bad magic)", offset=0)
    if version != CACHE_VERSION:
        raise ParseError(f"unsupported taper cache version {version}", offset=8)
    expected = _HEADER.size + 8 * (k * n + k)
    if len(data) != expected:
        raise ParseError(f"taper cache should be {expected} bytes, found {len(data)}",
                         offset=min(len(data), expected))
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    params = TaperParams(n, half_bw, fs, k)
    return TaperSet(params, body[: k * n].reshape(k, n).astype(float), body[k * n :].astype(float))


def cache_filename(params: TaperParams) -> str:
    return f"dpss_N{params.n_samples}_NW{params.nw:g}_K{params.n_tapers}_v{CACHE_VERSION}.bin"


def cached_tapers(params: TaperParams, cache_dir=None) -> TaperSet:
    """Load tapers for ``params`` from ``cache_dir``, computing and storing on a miss."""
    if cache_dir is None:
        return compute_tapers(params)
    cache_dir = Path(cache_dir)
    path = cache_dir / cache_filename(params)
    if path.exists():
        try:
            ts = load_taper_cache(path)
        except ParseError:
            ts = None
        if ts is not None and ts.params == params:
            return ts
    ts = compute_tapers(params)
    cache_dir.mkdir(parents=True, exist_ok=True)
    save_taper_cache(path, ts)
    return ts
