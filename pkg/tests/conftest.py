import numpy as np
import pytest

from qsdlab import QuantumState, make_environment


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)


@pytest.fixture
def dephasing():
    return make_environment("dephasing", {"mu": 0.6})


@pytest.fixture
def thermal():
    return make_environment("thermal", {"mu1": 2.0, "mu2": 1.0})


@pytest.fixture
def measurement():
    return make_environment("measurement", {"mu": 1.0})


@pytest.fixture
def plus_state():
    return QuantumState(np.array([1.0, 1.0]) / np.sqrt(2.0))


def random_unit_state(rng, n=2):
    psi = rng.normal(size=n) + 1j * rng.normal(size=n)
    return QuantumState(psi / np.linalg.norm(psi))


def random_chart_point(rng, n=2):
    psi = random_unit_state(rng, n).amplitudes
    return np.concatenate([np.sqrt(2.0) * psi.real, np.sqrt(2.0) * psi.imag])
