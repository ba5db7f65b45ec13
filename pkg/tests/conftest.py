import numpy as np
import pytest

from spmlab.operators import (
    build_conductance_generator,
    build_weighted_generator,
    fractional_power,
    path_graph,
)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def two_point_gen():
    return build_conductance_generator(path_graph(2))


@pytest.fixture
def two_point():
    return two_point_gen()


@pytest.fixture
def path8():
    return build_conductance_generator(path_graph(8))


@pytest.fixture
def path16():
    return build_conductance_generator(path_graph(16))


@pytest.fixture
def weighted16():
    rho = np.where(np.arange(16) < 8, 1.0, 2.0)
    return build_weighted_generator(rho, h=1.0 / 16)


@pytest.fixture
def frac16():
    return fractional_power(build_conductance_generator(path_graph(16)), 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
