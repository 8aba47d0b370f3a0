import numpy as np
import pytest

from portscope.features import FeatureConfig
from portscope.synth import BurstComponent, ClassSignature

SEED = 42

# small frames keep the O(N^2) oracles affordable
SMALL_CFG = FeatureConfig(
    frame_length=64, hop=16, n_mels=12, n_mfcc=8, tempo_win=32, n_tempo_lags=6, min_bpm=3000.0, max_bpm=30000.0
)

ACCEPTANCE_RESULTS = []


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture
def small_cfg():
    return SMALL_CFG


@pytest.fixture
def square_signature():
    return ClassSignature(
        "square",
        baseline_counts=1000.0,
        components=(BurstComponent(period_s=0.1, duty=0.5, amplitude_counts=500.0),),
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
