import numpy as np
import pytest
from scipy import signal

from mtslope.classifier import RawStage
from mtslope.errors import InvalidSpecError
from mtslope.synth import SynthSpec, labeled_recording, powerlaw_epochs, synthesize_powerlaw


def test_deterministic():
    a = synthesize_powerlaw(SynthSpec(2.0, 60.0, seed=9))
    b = synthesize_powerlaw(SynthSpec(2.0, 60.0, seed=9))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, synthesize_powerlaw(SynthSpec(2.0, 60.0, seed=10)))


@pytest.mark.parametrize("beta", [0.0, 1.0, 2.0, 3.0])
def test_welch_slope(beta):
    # independent check of the generator with an ordinary Welch estimate
    x = synthesize_powerlaw(SynthSpec(beta, 2000.0, seed=1))
    f, p = signal.welch(x, 200.0, nperseg=4000)
    m = (f >= 2) & (f <= 40)
    slope = np.polyfit(np.log10(f[m]), np.log10(p[m]), 1)[0]
    assert slope == pytest.approx(-beta, abs=0.1)


def test_variance():
    v = [synthesize_powerlaw(SynthSpec(1.5, 300.0, seed=s, variance=4.0)).var() for s in range(20)]
    assert np.mean(v) == pytest.approx(4.0, rel=0.1)


def test_no_power_below_fmin():
    x = synthesize_powerlaw(SynthSpec(2.0, 100.0, seed=2, f_min_hz=1.0))
    spec = np.abs(np.fft.rfft(x)) ** 2
    f = np.fft.rfftfreq(len(x), 1 / 200)
    assert spec[f < 1.0].max() < 1e-20 * spec.max()


def test_epochs():
    eps = powerlaw_epochs(SynthSpec(1.0, 95.0, seed=0), epoch_s=30.0, channel="Cz")
    assert len(eps) == 3 and eps[1].start_time_s == 30.0 and eps[0].source_channel == "Cz"


@pytest.mark.parametrize("kw", [dict(beta=-1.0, duration_s=10.0), dict(beta=1.0, duration_s=0.0),
                                dict(beta=1.0, duration_s=10.0, variance=0.0),
                                dict(beta=1.0, duration_s=10.0025)])
def test_invalid(kw):
    with pytest.raises(InvalidSpecError):
        SynthSpec(**kw)


def test_labeled_recording():
    rec, hyp = labeled_recording([2.0, 2.8, 3.6], seed=1, extra_channels=("Fz",))
    assert rec.labels == ["Cz", "Fz"]
    assert len(rec.channel("Cz").samples) == 3 * 6000
    assert [e.stage for e in hyp.entries] == [RawStage.WAKE, RawStage.N3, RawStage.REM]
    assert [e.onset_s for e in hyp.entries] == [0.0, 30.0, 60.0]
    x = rec.channel("Cz").samples
    # segments are joined without jumps much larger than ordinary sample steps
    steps = np.abs(np.diff(x))
    assert steps[[5999, 11999]].max() < 10 * np.percentile(steps, 99)
