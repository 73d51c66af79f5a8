import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from loadclust.load_model import CompositeLoadModel, MotorParams, ZipParams

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def motor():
    return MotorParams(x_open=2.8, x_transient=0.2, t_open=1.1, inertia=2.5, torque_mech=0.8)


@pytest.fixture
def model(motor):
    return CompositeLoadModel(
        0.55, ZipParams(0.23, 0.31, 0.46), ZipParams(0.4, 0.2, 0.4), motor,
        nominal_p=0.8, nominal_q=0.3,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
