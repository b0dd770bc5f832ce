import json

import numpy as np
import pytest
from scipy import signal

from mtslope.dpss import TaperParams, compute_tapers, sparsify_tapers
from mtslope.errors import InvalidInputError
from mtslope.filters import Epoch
from mtslope.multitaper import PsdEstimate, modified_periodogram, multitaper_psd, psd_to_csv, psd_to_json

FS = 200.0


def white_epoch(rng, n=6000, sigma=1.0):
    return Epoch(sigma * rng.standard_normal(n), FS, n / FS, "Cz", 0.0)


class TestModifiedPeriodogram:
    def test_matches_scipy_periodogram(self, rng, anesthesia_tapers):
        x = rng.standard_normal(2000)
        for k in (0, 4, 8):
            g = anesthesia_tapers.taper(k)
            ours = modified_periodogram(x, g, delta_t_s=1 / FS, taper_index=k)
            f, ref = signal.periodogram(x, FS, window=g, detrend=False, scaling="density")
            np.testing.assert_allclose(ours.freqs_hz, f)
            np.testing.assert_allclose(ours.power, ref, rtol=1e-10, atol=1e-14)
            assert ours.taper_index == k

    def test_odd_length(self, rng):
        x = rng.standard_normal(201)
        g = np.full(201, 1 / np.sqrt(201))
        ours = modified_periodogram(x, g, delta_t_s=0.01)
        _, ref = signal.periodogram(x, 100.0, window="boxcar", detrend=False, scaling="density")
        np.testing.assert_allclose(ours.power, ref, rtol=1e-10)

    def test_epoch_supplies_dt(self, rng, anesthesia_tapers):
        ep = Epoch(rng.standard_normal(2000), FS, 10.0)
        a = modified_periodogram(ep, anesthesia_tapers.taper(0))
        b = modified_periodogram(ep.samples, anesthesia_tapers.taper(0), delta_t_s=1 / FS)
        np.testing.assert_array_equal(a.power, b.power)

    def test_errors(self, anesthesia_tapers):
        with pytest.raises(InvalidInputError):
            modified_periodogram(np.zeros(2000), anesthesia_tapers.taper(0))
        with pytest.raises(InvalidInputError):
            modified_periodogram(np.zeros(100), anesthesia_tapers.taper(0), delta_t_s=0.005)


class TestMultitaper:
    def test_is_mean_of_scipy_periodograms(self, rng, anesthesia_tapers):
        ep = Epoch(rng.standard_normal(2000) + 3.0, FS, 10.0)
        est = multitaper_psd(ep, anesthesia_tapers, band=None)
        ref = np.mean([signal.periodogram(ep.samples, FS, window=g, detrend="constant", scaling="density")[1]
                       for g in anesthesia_tapers.tapers], axis=0)
        np.testing.assert_allclose(est.power, ref, rtol=1e-10, atol=1e-16)
        assert est.n_tapers_used == 9
        assert est.delta_t_s == pytest.approx(1 / FS)

    def test_default_band(self, rng, sleep_tapers):
        est = multitaper_psd(white_epoch(rng), sleep_tapers)
        assert est.freqs_hz[0] == pytest.approx(0.5)
        assert est.freqs_hz[-1] == pytest.approx(45.0)
        np.testing.assert_allclose(np.diff(est.freqs_hz), 1 / 30)

    def test_white_noise_level(self, rng, sleep_tapers):
        # one-sided white PSD is 2 sigma^2 / fs
        levels = [multitaper_psd(white_epoch(rng, sigma=2.0), sleep_tapers).power.mean() for _ in range(20)]
        assert np.mean(levels) == pytest.approx(2 * 4.0 / FS, rel=0.02)

    def test_parseval(self, rng, sleep_tapers):
        ratios = []
        for _ in range(20):
            ep = white_epoch(rng)
            est = multitaper_psd(ep, sleep_tapers, band=None)
            ratios.append(est.integrate() / ep.samples.var())
        assert np.mean(ratios) == pytest.approx(1.0, abs=0.02)

    def test_tone_main_lobe(self, sleep_tapers):
        t = np.arange(6000) / FS
        est = multitaper_psd(Epoch(np.sin(2 * np.pi * 30 * t), FS, 30.0), sleep_tapers, band=None)
        peak = np.argmax(est.power)
        assert est.freqs_hz[peak] == pytest.approx(30.0)
        above = est.freqs_hz[est.power >= est.power[peak] / 2]
        assert above.min() >= 29.5 and above.max() <= 30.5
        # leakage 5 Hz or more from the tone stays 40 dB down, even with the
        # weakly concentrated last tapers included
        far = est.band(0.5, 25.0).power.max()
        assert far < 1e-4 * est.power[peak]

    def test_detrend_removes_offset(self, rng, sleep_tapers):
        x = rng.standard_normal(6000)
        a = multitaper_psd(Epoch(x, FS, 30.0), sleep_tapers)
        b = multitaper_psd(Epoch(x + 50.0, FS, 30.0), sleep_tapers)
        np.testing.assert_allclose(a.power, b.power, rtol=1e-8)

    def test_zero_padding_grid(self, rng, anesthesia_tapers):
        est = multitaper_psd(Epoch(rng.standard_normal(2000), FS, 10.0), anesthesia_tapers, band=None, nfft=4096)
        assert len(est.freqs_hz) == 2049
        with pytest.raises(InvalidInputError):
            multitaper_psd(Epoch(np.zeros(2000), FS, 10.0), anesthesia_tapers, nfft=1000)

    def test_length_mismatch(self, sleep_tapers):
        with pytest.raises(InvalidInputError):
            multitaper_psd(Epoch(np.zeros(2000), FS, 10.0), sleep_tapers)

    def test_sparse_tapers_give_same_psd(self, rng, sleep_tapers):
        ep = white_epoch(rng)
        dense = multitaper_psd(ep, sleep_tapers)
        sparse = multitaper_psd(ep, sparsify_tapers(sleep_tapers, 1e-10))
        np.testing.assert_allclose(sparse.power, dense.power, rtol=1e-6)

    def test_linear_in_power(self, rng, anesthesia_tapers):
        x = rng.standard_normal(2000)
        a = multitaper_psd(Epoch(x, FS, 10.0), anesthesia_tapers)
        b = multitaper_psd(Epoch(3 * x, FS, 10.0), anesthesia_tapers)
        np.testing.assert_allclose(b.power, 9 * a.power, rtol=1e-12)


class TestPsdEstimate:
    def test_validation(self):
        with pytest.raises(InvalidInputError):
            PsdEstimate([1.0, 2.0], [1.0], 1, "", 0.005)
        with pytest.raises(InvalidInputError):
            PsdEstimate([2.0, 1.0], [1.0, 1.0], 1, "", 0.005)
        with pytest.raises(InvalidInputError):
            PsdEstimate([1.0, 2.0], [1.0, -1.0], 1, "", 0.005)

    def test_immutable(self):
        p = PsdEstimate([1.0, 2.0], [1.0, 1.0], 1, "", 0.005)
        with pytest.raises(ValueError):
            p.power[0] = 3.0

    def test_integrate_rectangle(self):
        p = PsdEstimate(np.arange(11) * 0.5, np.ones(11), 1, "", 0.005)
        assert p.integrate() == pytest.approx(5.5)
        assert p.integrate(1.0, 2.0) == pytest.approx(1.5)
        assert p.integrate(1.0, 2.0, include_lo=False) == pytest.approx(1.0)

    def test_exports(self):
        p = PsdEstimate([1.0, 2.0], [0.5, 0.25], 3, "Cz@0s", 0.005)
        assert psd_to_csv(p) == "freq_hz,power\n1.0,0.5\n2.0,0.25\n"
        rec = json.loads(psd_to_json(p, epoch_index=4))
        assert rec["epoch_index"] == 4 and rec["n_tapers"] == 3 and rec["power"] == [0.5, 0.25]


def test_epoch_reference_string(rng, sleep_tapers):
    est = multitaper_psd(Epoch(rng.standard_normal(6000), FS, 30.0, "Cz", 90.0), sleep_tapers)
    assert est.epoch_ref == "Cz@90s"


def test_small_problem_against_direct_dft(rng):
    ts = compute_tapers(TaperParams.from_nw(64, 2.5, 64.0))
    x = rng.standard_normal(64)
    est = multitaper_psd(Epoch(x, 64.0, 1.0), ts, band=None, detrend=False)
    n = np.arange(64)
    f = np.arange(33)
    direct = np.zeros(33)
    for g in ts.tapers:
        direct += np.abs(np.exp(-2j * np.pi * np.outer(f, n) / 64) @ (g * x)) ** 2 / 64.0
    direct /= ts.n_tapers
    direct[1:-1] *= 2
    np.testing.assert_allclose(est.power, direct, rtol=1e-10)
