import numpy as np
import pytest

from vocsim.network import KronNetwork
from vocsim.oscillator import derive_params

PRE_STEP = np.array([[37.71, -8.2, -24.6], [-8.2, 27.87, -16.4], [-24.6, -16.4, 50.82]])
POST_STEP = np.array([[37.07, -8.62, -25.86], [-8.62, 27.59, -17.24], [-25.86, -17.24, 48.28]])
CONDUCTANCE_SCALE = 0.045
GAINS = (2.0, 2.0, 1.0)

ACCEPTANCE_LINES = []


@pytest.fixture
def base():
    return derive_params(10.0, 250e-6, 28.14e-3, 1.0, 4.1667e-5)


@pytest.fixture
def bank3(base):
    return [base.with_kappa(k) for k in GAINS]


@pytest.fixture
def pre_net():
    return KronNetwork(PRE_STEP * CONDUCTANCE_SCALE)


@pytest.fixture
def post_net():
    return KronNetwork(POST_STEP * CONDUCTANCE_SCALE)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
