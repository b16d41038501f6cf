import math

import numpy as np
import pytest

from orbit_persist.exceptions import DivergenceError, InvalidInputError
from orbit_persist.integrate import hermite, integrate, rk4_solve
from orbit_persist.models import VectorField, build_model


def test_zero_field_is_constant():
    f = VectorField(3, lambda x: np.zeros_like(x))
    tr = integrate(f, np.array([1.0, -2.0, 3.0]), (0.0, 2.0), 0.1)
    np.testing.assert_array_equal(tr.x, np.tile([1.0, -2.0, 3.0], (tr.t.size, 1)))


def test_exponential():
    f = VectorField(1, lambda x: x)
    tr = integrate(f, np.array([1.0]), (0.0, 1.0), 1e-3)
    assert abs(tr.x[-1, 0] - math.e) < 1e-10


def test_hopf_attracted_to_unit_circle():
    tr = integrate(build_model("hopf2d"), np.array([2.0, 0.0]), (0.0, 50.0), 1e-2)
    assert abs(np.linalg.norm(tr.x[-1]) - 1.0) < 1e-6


def test_dense_output_fourth_order():
    # x' = -x: Hermite dense output between steps is O(h^4)
    f = VectorField(1, lambda x: -x)
    errs = []
    for h in (0.1, 0.05):
        tr = integrate(f, np.array([1.0]), (0.0, 1.0), h)
        tq = np.linspace(0.013, 0.987, 37)
        errs.append(np.max(np.abs(tr(tq)[:, 0] - np.exp(-tq))))
    assert 12 < errs[0] / errs[1] < 20


def test_hermite_endpoints():
    x0, x1, d0, d1 = np.array([1.0]), np.array([2.0]), np.array([0.5]), np.array([-1.0])
    assert hermite(0.0, 0.3, x0, x1, d0, d1) == pytest.approx(1.0)
    assert hermite(1.0, 0.3, x0, x1, d0, d1) == pytest.approx(2.0)


def test_outside_span_and_blowup():
    tr = integrate(VectorField(1, lambda x: -x), np.array([1.0]), (0.0, 1.0), 0.1)
    with pytest.raises(InvalidInputError):
        tr(1.5)
    # x' = x^2 from 1 blows up at t = 1
    with pytest.raises(DivergenceError), np.errstate(over="ignore", invalid="ignore"):
        rk4_solve(lambda x, t: x * x, np.array([1.0]), 0.0, 5.0, 50)
