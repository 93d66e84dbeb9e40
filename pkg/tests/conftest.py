import numpy as np
import pytest

from anyon_afp.grid import make_grid
from anyon_afp.townes import sample_on_grid, townes


@pytest.fixture(scope="session")
def townes_data():
    return townes(2.0)


@pytest.fixture(scope="session")
def grid64():
    return make_grid(64, 16.0)


@pytest.fixture(scope="session")
def grid128():
    return make_grid(128, 16.0)


@pytest.fixture(scope="session")
def q0_128(townes_data, grid128):
    return sample_on_grid(townes_data.profile, grid128, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
