import numpy as np
import pytest

from calderonlab.geometry import make_domain


@pytest.fixture(scope="session")
def unit_disc():
    return make_domain("circle", 256)


@pytest.fixture(scope="session")
def tangent_disc():
    return make_domain("circle", 256, radius=1.0, center=(-1.0, 0.0))


@pytest.fixture(scope="session")
def tangent_disc_512():
    return make_domain("circle", 512, radius=1.0, center=(-1.0, 0.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def disc_points(rng, n, radius=1.0, center=(0.0, 0.0)):
    r = radius * np.sqrt(rng.uniform(0, 1, n))
    t = rng.uniform(0, 2 * np.pi, n)
    return np.asarray(center) + np.column_stack([r * np.cos(t), r * np.sin(t)])


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
