import numpy as np
import pytest

from mtslope.dpss import TaperParams, compute_tapers


@pytest.fixture(scope="session")
def sleep_tapers():
    """Default 30 s / 200 Hz / 0.5 Hz smoothing taper set (K=29)."""
    return compute_tapers(TaperParams.from_smoothing(30.0))


@pytest.fixture(scope="session")
def anesthesia_tapers():
    return compute_tapers(TaperParams.from_smoothing(10.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
