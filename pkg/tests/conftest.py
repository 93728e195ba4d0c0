import numpy as np
import pytest

from ipdsim.stimgen import Condition, Delayed, NoiseSpec, TonePhase

FS = 48000


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def short_condition():
    """N0Spi with a shortened interval so model-observer tests stay fast."""
    noise = NoiseSpec(bandwidth=100.0, duration_s=0.1, ramp_s=0.01,
                      interaural_mode=Delayed(0.0))
    return Condition(noise, TonePhase.SPi, "short_N0Spi",
                     tone_duration_s=0.06, tone_ramp_s=0.01)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
