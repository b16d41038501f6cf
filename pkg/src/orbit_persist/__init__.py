"""Periodic orbits of delay equations that perturb an ODE limit cycle."""
__version__ = "0.1.0"

from .continuation import BranchPoint, richardson_ratio, smoothness_probe, sweep, sweep_many
from .exceptions import (
    ConfigError,
    ConvergenceError,
    DivergenceError,
    H1ppViolation,
    H1Violation,
    HyperbolicityViolation,
    HypothesisViolation,
    InvalidInputError,
    OrbitPersistError,
    SolverError,
    UnsupportedValidationError,
)
from .floquet import FloquetData, analyze, solve_bordered
from .gamma import SolveReport, SolverConfig, invariance_residual, solve
from .models import CATALOG, VectorField, build_model, expression_model
from .orbit import OrbitSeed, find_periodic_orbit
from .periodic import PeriodicSamples, c0_distance, spectral_derivative, trig_eval
from .perturbation import PerturbationSpec, eval_P
from .validation import ValidationReport, method_of_steps


__all__ = [
    "BranchPoint",
    "richardson_ratio",
    "smoothness_probe",
    "sweep",
    "sweep_many",
    "ConfigError",
    "ConvergenceError",
    "DivergenceError",
    "H1ppViolation",
    "H1Violation",
    "HyperbolicityViolation",
    "HypothesisViolation",
    "InvalidInputError",
    "OrbitPersistError",
    "SolverError",
    "UnsupportedValidationError",
    "FloquetData",
    "analyze",
    "solve_bordered",
    "SolveReport",
    "SolverConfig",
    "invariance_residual",
    "solve",
    "CATALOG",
    "VectorField",
    "build_model",
    "expression_model",
    "OrbitSeed",
    "find_periodic_orbit",
    "PeriodicSamples",
    "c0_distance",
    "spectral_derivative",
    "trig_eval",
    "PerturbationSpec",
    "eval_P",
    "ValidationReport",
    "method_of_steps",
    "PeriodicOrbitSolver",
]


def __getattr__(name):
    # sklearn is slow to import; load the facade on first use
    if name == "PeriodicOrbitSolver":
        from .estimator import PeriodicOrbitSolver

        return PeriodicOrbitSolver
    raise AttributeError(name)
