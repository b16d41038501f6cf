import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from orbit_persist import PeriodicOrbitSolver
from orbit_persist.exceptions import InvalidInputError
from orbit_persist.models import build_model
from orbit_persist.perturbation import PerturbationSpec


def test_params_protocol():
    spec = PerturbationSpec("constant_delay", delay={"r": 1.0}, epsilon=1e-3)
    est = PeriodicOrbitSolver(perturbation=spec, N=64)
    params = est.get_params()
    assert params["N"] == 64 and params["perturbation"] is spec
    twin = clone(est)
    assert twin.get_params()["N"] == 64 and not hasattr(twin, "K_")
    est.set_params(tol_fixed=1e-10)
    assert est.tol_fixed == 1e-10


def test_fit_predict_unperturbed():
    est = PeriodicOrbitSolver(N=64).fit()
    assert est.omega_ == pytest.approx(1 / (2 * math.pi), abs=1e-9)
    theta = np.linspace(0, 1, 12).reshape(3, 4)
    vals = est.predict(theta)
    assert vals.shape == (3, 4, 2)
    np.testing.assert_allclose(np.linalg.norm(vals, axis=-1), 1.0, atol=1e-9)
    assert est.score() > -1e-10


def test_fit_with_delay_matches_report():
    spec = PerturbationSpec("constant_delay", delay={"r": 1.0}, epsilon=1e-3)
    est = PeriodicOrbitSolver(perturbation=spec).fit()
    assert est.report_.residual < 1e-9
    assert est.omega_ == est.report_.omega


def test_upsilon_operator():
    coupling = lambda x, y, g: np.stack([np.zeros_like(y[..., 0]), y[..., 0]], -1)
    spec = PerturbationSpec("constant_delay", coupling=coupling, delay={"r": 1.0}, epsilon=1e-3)
    est = PeriodicOrbitSolver(model="forced_osc", perturbation=spec, operator="upsilon").fit()
    assert est.omega_ == est.seed_.omega0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        PeriodicOrbitSolver().predict([0.0])
    with pytest.raises(NotFittedError):
        PeriodicOrbitSolver().score()


def test_custom_field_needs_guess():
    field = build_model("hopf2d")
    with pytest.raises(InvalidInputError):
        PeriodicOrbitSolver(model=field).fit()
    est = PeriodicOrbitSolver(model=field, guess=([1.0, 0.0], 6.3), N=32).fit()
    assert est.omega_ == pytest.approx(1 / (2 * math.pi), abs=1e-9)
