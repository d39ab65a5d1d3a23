import numpy as np
import pytest
from hypothesis import settings

from saapde.fields import UniformSampler
from saapde.pde import Discretization
from saapde.saa import SAAProblem

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def disc16():
    return Discretization(16)


@pytest.fixture(scope="session")
def disc8():
    return Discretization(8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def saa16(disc16):
    return SAAProblem(disc16, UniformSampler(1).draw(4))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
