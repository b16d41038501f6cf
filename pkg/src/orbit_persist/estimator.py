"""scikit-learn style facade over the solver.

Only the parameter protocol (``get_params``/``set_params``/``clone``) and
``fit``/``predict`` are provided; there is no training data, so ``fit``
ignores ``X`` and ``y``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .exceptions import InvalidInputError
from .floquet import analyze
from .gamma import SolverConfig, solve
from .models import VectorField, build_model, default_guess
from .orbit import find_periodic_orbit
from .periodic import trig_eval


class PeriodicOrbitSolver(BaseEstimator):
    """Solve for the perturbed orbit of a catalog model.

    Parameters
    ----------
    model : str or VectorField
        Catalog name, or a field together with ``guess``.
    perturbation : PerturbationSpec or None
        ``None`` solves the unperturbed problem.
    guess : (x0, T), optional
        Shooting start; catalog models have defaults.
    N : int
    operator : {"gamma", "upsilon", "hyperbolic"}
    tol_fixed : float
    max_iters : int

    Attributes
    ----------
    seed_, floquet_, report_ :
        Unperturbed orbit, its Floquet data and the solve report.
    omega_ : float
    K_ : PeriodicSamples
    """

    def __init__(self, model="hopf2d", perturbation=None, guess=None, N=128, operator="gamma", tol_fixed=1e-12, max_iters=200):
        self.model = model
        self.perturbation = perturbation
        self.guess = guess
        self.N = N
        self.operator = operator
        self.tol_fixed = tol_fixed
        self.max_iters = max_iters

    def _field(self):
        if isinstance(self.model, VectorField):
            return self.model
        return build_model(self.model)

    def fit(self, X=None, y=None):
        field = self._field()
        if self.guess is not None:
            x0, T = self.guess
        elif isinstance(self.model, str):
            x0, T = default_guess(self.model)
        else:
            raise InvalidInputError("a custom field needs guess=(x0, T)")
        seed = find_periodic_orbit(field, np.asarray(x0, dtype=float), float(T), N=self.N)
        fd = analyze(seed)
        seed = seed.with_floquet(fd)
        cfg = SolverConfig(operator=self.operator, tol_fixed=self.tol_fixed, max_iters=self.max_iters)
        rep = solve(seed, self.perturbation, fd, cfg)
        self.seed_ = seed
        self.floquet_ = fd
        self.report_ = rep
        self.omega_ = rep.omega
        self.K_ = rep.K
        return self

    def predict(self, theta):
        """Orbit values ``K(theta)``, shape ``theta.shape + (n,)``."""
        if not hasattr(self, "K_"):
            raise NotFittedError("call fit() first")
        return trig_eval(self.K_, np.asarray(theta, dtype=float))

    def score(self, X=None, y=None) -> float:
        """Negative invariance residual (larger is better)."""
        if not hasattr(self, "report_"):
            raise NotFittedError("call fit() first")
        return -float(self.report_.residual)
