import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid
from scipy.signal.windows import dpss as scipy_dpss

from mtslope.dpss import (
    CACHE_MAGIC,
    DEFAULT_SPARSE_EPSILON,
    SparseVector,
    TaperParams,
    TaperSet,
    cache_filename,
    cached_tapers,
    compute_tapers,
    concentration_of,
    load_taper_cache,
    save_taper_cache,
    sinc_kernel_column,
    sparsify_tapers,
)
from mtslope.errors import (
    DegradationError,
    InvalidInputError,
    InvalidSpecError,
    ParseError,
    TaperConcentrationWarning,
)


def dense_oracle(n, nw, k):
    """Top-k eigenpairs of the full sinc kernel sin(2 pi W (m-n)) / (pi (m-n))."""
    w = nw / n
    d = np.subtract.outer(np.arange(n), np.arange(n)).astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.sin(2 * np.pi * w * d) / (np.pi * d)
    a[d == 0] = 2 * w
    lam, v = np.linalg.eigh(a)
    return lam[::-1][:k], v[:, ::-1][:, :k].T


def align(ref, v):
    return np.where(np.sum(ref * v, axis=1, keepdims=True) < 0, -v, v)


class TestParams:
    def test_default_counts(self):
        assert TaperParams.from_smoothing(30.0).n_tapers == 29
        assert TaperParams.from_smoothing(10.0).n_tapers == 9

    def test_derived_quantities(self):
        p = TaperParams.from_smoothing(30.0)
        assert p.n_samples == 6000
        assert p.nw == pytest.approx(15.0)
        assert p.w == pytest.approx(0.5 / 200)

    def test_from_nw(self):
        p = TaperParams.from_nw(128, 4.0, 1.0)
        assert p.n_tapers == 7
        assert p.half_bandwidth_hz == pytest.approx(4 / 128)

    @pytest.mark.parametrize("args", [(0, 0.5, 200.0, 3), (100, 0.0, 200.0, 3), (100, 0.5, 200.0, 0),
                                      (100, 150.0, 200.0, 3), (10, 0.5, 200.0, 11)])
    def test_invalid(self, args):
        with pytest.raises(InvalidSpecError):
            TaperParams(*args)


class TestAgainstOracles:
    @pytest.mark.parametrize("n", [32, 64, 128, 256])
    @pytest.mark.parametrize("nw", [2.5, 4.0])
    def test_dense_kernel(self, n, nw):
        k = int(2 * nw - 1)
        ts = compute_tapers(TaperParams.from_nw(n, nw, 1.0, k))
        lam, v = dense_oracle(n, nw, k)
        np.testing.assert_allclose(align(ts.tapers, v), ts.tapers, atol=1e-8)
        np.testing.assert_allclose(ts.eigenvalues, lam, atol=1e-12)

    @pytest.mark.parametrize("n,nw,k", [(512, 4.0, 7), (2000, 5.0, 9), (6000, 15.0, 29)])
    def test_scipy_dpss(self, n, nw, k):
        ts = compute_tapers(TaperParams.from_nw(n, nw, 1.0, k))
        ref, ratios = scipy_dpss(n, nw, k, return_ratios=True)
        np.testing.assert_allclose(ts.tapers, ref, atol=1e-10)  # same sign convention
        np.testing.assert_allclose(ts.eigenvalues, ratios, atol=1e-10)

    def test_concentration_matches_eigenvalue(self):
        ts = compute_tapers(TaperParams.from_nw(256, 4.0, 200.0, 7))
        for g, lam in zip(ts.tapers, ts.eigenvalues):
            assert concentration_of(g, ts.params.half_bandwidth_hz, 200.0) == pytest.approx(lam, abs=1e-12)

    def test_concentration_by_quadrature(self):
        # in-band fraction of |G(f)|^2 by dense numerical integration
        ts = compute_tapers(TaperParams.from_nw(64, 2.5, 1.0, 4))
        w = ts.params.w
        f = np.linspace(-w, w, 20001)
        for g, lam in zip(ts.tapers, ts.eigenvalues):
            spec = np.abs(np.exp(-2j * np.pi * np.outer(f, np.arange(64))) @ g) ** 2
            # full-band integral of |G|^2 is sum(g^2) = 1
            assert trapezoid(spec, f) == pytest.approx(lam, abs=1e-8)

    def test_sinc_kernel_column(self):
        c = sinc_kernel_column(5, 0.1)
        assert c[0] == pytest.approx(0.2)
        assert c[1] == pytest.approx(np.sin(0.2 * np.pi) / np.pi)


class TestFullScale:
    def test_orthonormal(self, sleep_tapers):
        g = sleep_tapers.tapers
        assert g.shape == (29, 6000)
        assert np.abs(g @ g.T - np.eye(29)).max() < 1e-10

    def test_eigenvalues_in_unit_interval_and_ordered(self, sleep_tapers):
        lam = sleep_tapers.eigenvalues
        assert np.all((lam > 0) & (lam <= 1))
        # leading values round to 1.0 in float64, so only non-increase is checkable there
        assert np.all(np.diff(lam) <= 1e-13)
        assert lam[-1] < lam[-2] < lam[-3]

    def test_last_tapers_lose_concentration(self, sleep_tapers):
        lam = sleep_tapers.eigenvalues
        assert lam[0] > 1 - 1e-12
        assert lam[-1] < 0.95

    def test_symmetry(self, sleep_tapers):
        g = sleep_tapers.tapers
        for k in range(29):
            np.testing.assert_allclose(g[k][::-1], (-1) ** k * g[k], atol=1e-10)

    def test_sign_convention(self, sleep_tapers):
        g = sleep_tapers.tapers
        assert np.all(g[0::2].sum(axis=1) > 0)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(16, 300), nw=st.sampled_from([1.5, 2.0, 2.5, 3.0, 4.0]))
def test_properties(n, nw):
    k = int(2 * nw - 1)
    ts = compute_tapers(TaperParams.from_nw(n, nw, 1.0, k))
    g = ts.tapers
    assert np.abs(g @ g.T - np.eye(k)).max() < 1e-10
    lam = ts.eigenvalues
    assert np.all((lam > 0) & (lam <= 1))
    assert np.all(np.diff(lam) < 0)  # strictly decreasing for these small sizes
    for j in range(k):
        np.testing.assert_allclose(g[j][::-1], (-1) ** j * g[j], atol=1e-9)


def test_too_many_tapers_warns():
    with pytest.warns(TaperConcentrationWarning):
        compute_tapers(TaperParams.from_nw(128, 2.5, 1.0, 6))


def test_default_count_does_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        compute_tapers(TaperParams.from_nw(128, 2.5, 1.0))


class TestConcentrationOf:
    def test_zero_energy(self):
        with pytest.raises(InvalidInputError):
            concentration_of(np.zeros(10), 0.1, 1.0)

    def test_bad_bandwidth(self):
        with pytest.raises(InvalidSpecError):
            concentration_of(np.ones(10), 0.0, 1.0)

    def test_full_band_is_one(self, rng):
        assert concentration_of(rng.standard_normal(50), 0.5, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_impulse(self):
        x = np.zeros(11)
        x[5] = 1
        assert concentration_of(x, 0.1, 1.0) == pytest.approx(0.2)


class TestSparse:
    def test_vector_round_trip(self, rng):
        x = rng.standard_normal(40)
        x[np.abs(x) < 0.7] = 0
        v = SparseVector.from_dense(x, 1e-12)
        np.testing.assert_array_equal(v.to_dense(), x)
        np.testing.assert_array_equal(v.indices, np.flatnonzero(x))
        assert v.nnz == np.count_nonzero(x)

    def test_vector_validation(self):
        with pytest.raises(InvalidInputError):
            SparseVector.from_indices([3, 2], [1.0, 2.0], 5)
        with pytest.raises(InvalidInputError):
            SparseVector.from_indices([0, 5], [1.0, 2.0], 5)
        with pytest.raises(InvalidInputError):
            SparseVector([[0, 2]], [1.0], 5)

    def test_empty_vector(self):
        v = SparseVector.from_dense(np.zeros(5), 1.0)
        assert v.nnz == 0
        np.testing.assert_array_equal(v.to_dense(), np.zeros(5))

    def test_epsilon_zero_is_identity(self, sleep_tapers):
        s = sparsify_tapers(sleep_tapers, 0.0)
        np.testing.assert_array_equal(s.dense(), sleep_tapers.tapers)
        assert s.sparsity.energy_loss == (0.0,) * 29

    def test_default_epsilon(self, sleep_tapers):
        s = sparsify_tapers(sleep_tapers, DEFAULT_SPARSE_EPSILON)
        assert s.is_sparse
        assert s.nbytes <= sleep_tapers.nbytes
        assert max(s.sparsity.energy_loss) < 1e-12
        assert s.sparsity.max_gram_deviation < 1e-7
        d = s.dense()
        kept = np.abs(sleep_tapers.tapers) >= DEFAULT_SPARSE_EPSILON
        np.testing.assert_array_equal(d[kept], sleep_tapers.tapers[kept])
        assert np.all(d[~kept] == 0)

    def test_density_falls_with_epsilon(self, sleep_tapers):
        dens = [np.mean(sparsify_tapers(sleep_tapers, e).densities()) for e in (1e-10, 1e-8, 1e-6)]
        assert dens[0] >= dens[1] >= dens[2]
        assert dens[2] < 0.95

    def test_sparse_bytes_not_above_dense_at_1e6(self, sleep_tapers):
        s = sparsify_tapers(sleep_tapers, 1e-6)
        assert s.sparsity.sparse_bytes <= s.sparsity.dense_bytes

    def test_refuses_heavy_truncation(self, sleep_tapers):
        with pytest.raises(DegradationError):
            sparsify_tapers(sleep_tapers, 1e-2)

    def test_negative_epsilon(self, sleep_tapers):
        with pytest.raises(InvalidSpecError):
            sparsify_tapers(sleep_tapers, -1.0)

    def test_taperset_shape_checks(self):
        p = TaperParams.from_nw(64, 2.5, 1.0)
        with pytest.raises(InvalidInputError):
            TaperSet(p, np.zeros((3, 64)), np.ones(4))


class TestCache:
    def test_round_trip(self, tmp_path, anesthesia_tapers):
        path = save_taper_cache(tmp_path / "t.bin", anesthesia_tapers)
        ts = load_taper_cache(path)
        assert ts.params == anesthesia_tapers.params
        np.testing.assert_array_equal(ts.tapers, anesthesia_tapers.tapers)
        np.testing.assert_array_equal(ts.eigenvalues, anesthesia_tapers.eigenvalues)

    def test_layout(self, tmp_path, anesthesia_tapers):
        data = save_taper_cache(tmp_path / "t.bin", anesthesia_tapers).read_bytes()
        assert data[:8] == CACHE_MAGIC
        assert len(data) == 40 + 8 * (9 * 2000 + 9)

    @pytest.mark.parametrize("mutate", [lambda b: b"XXXXXXXX" + b[8:], lambda b: b[:-8], lambda b: b[:20],
                                        lambda b: b[:8] + b"\x07\x00\x00\x00" + b[12:]])
    def test_corrupt(self, tmp_path, anesthesia_tapers, mutate):
        path = save_taper_cache(tmp_path / "t.bin", anesthesia_tapers)
        path.write_bytes(mutate(path.read_bytes()))
        with pytest.raises(ParseError):
            load_taper_cache(path)

    def test_cached_tapers_creates_and_reuses(self, tmp_path):
        p = TaperParams.from_smoothing(10.0)
        first = cached_tapers(p, tmp_path)
        path = tmp_path / cache_filename(p)
        assert path.exists()
        assert path.name == "dpss_N2000_NW5_K9_v1.bin"
        mtime = path.stat().st_mtime_ns
        again = cached_tapers(p, tmp_path)
        assert path.stat().st_mtime_ns == mtime
        np.testing.assert_array_equal(first.tapers, again.tapers)

    def test_cached_tapers_recovers_from_corruption(self, tmp_path):
        p = TaperParams.from_smoothing(10.0)
        (tmp_path / cache_filename(p)).write_bytes(b"garbage")
        ts = cached_tapers(p, tmp_path)
        assert ts.n_tapers == 9
        assert load_taper_cache(tmp_path / cache_filename(p)).n_tapers == 9
