import math

import numpy as np
import pytest

from orbit_persist.floquet import analyze
from orbit_persist.models import build_model, default_guess
from orbit_persist.orbit import find_periodic_orbit
from orbit_persist.perturbation import PerturbationSpec

OMEGA_HOPF = 1.0 / (2.0 * math.pi)

# (criterion number, line) from tests/test_acceptance.py, shown after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def make_seed(name, N=128, params=None):
    field = build_model(name, params)
    x0, T = default_guess(name)
    seed = find_periodic_orbit(field, x0, T, N=N)
    fd = analyze(seed)
    return field, seed.with_floquet(fd), fd


@pytest.fixture(scope="session")
def hopf():
    return make_seed("hopf2d")


@pytest.fixture(scope="session")
def hopf3u():
    return make_seed("hopf3u")


@pytest.fixture(scope="session")
def forced():
    return make_seed("forced_osc")


@pytest.fixture(scope="session")
def delay_spec():
    return PerturbationSpec("constant_delay", delay={"r": 1.0}, epsilon=1e-3)


def random_trig(rng, n=2, degree=10, scale=1.0):
    """Random real trigonometric polynomial and its exact derivatives."""
    a = rng.normal(size=(degree + 1, n)) * scale
    b = rng.normal(size=(degree + 1, n)) * scale
    b[0] = 0.0
    k = np.arange(degree + 1)[:, None]

    def f(theta, order=0):
        th = np.asarray(theta, dtype=float)[..., None, None]
        w = 2 * np.pi * k
        ang = w * th
        # d^order/dtheta^order of a cos + b sin
        c = np.cos(ang + order * np.pi / 2)
        s = np.sin(ang + order * np.pi / 2)
        return ((a * c + b * s) * w ** order).sum(axis=-2)

    return f
