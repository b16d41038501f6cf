"""Error hierarchy.

Every error carries a short machine-readable ``code`` and the process exit
status the CLI maps it to (1 usage/config, 2 hypothesis violation,
3 solver failure).
"""


class OrbitPersistError(Exception):
    code = "error"
    exit_code = 1


class InvalidInputError(OrbitPersistError, ValueError):
    code = "invalid_input"


class ConfigError(InvalidInputError):
    code = "config"


class HypothesisViolation(OrbitPersistError):
    code = "hypothesis"
    exit_code = 2


class H1Violation(HypothesisViolation):
    code = "H1_violation"


class H1ppViolation(HypothesisViolation):
    code = "H1pp_violation"


class HyperbolicityViolation(HypothesisViolation):
    code = "H1.1_violation"


class TruncationHorizonError(HypothesisViolation):
    code = "truncation_horizon"


class SolverError(OrbitPersistError):
    code = "solver"
    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DivergenceError(SolverError):
    code = "divergence"


class ConvergenceError(SolverError):
    code = "no_convergence"


class SingularJacobianError(ConvergenceError):
    code = "singular_jacobian"


class BranchGapError(ConvergenceError):
    code = "branch_gap"


class PeriodicityDefectError(SolverError):
    code = "periodicity_defect"


class PerturbationError(SolverError):
    code = "perturbation"


class SpeedConditionError(PerturbationError):
    code = "speed_condition"


class UnsupportedValidationError(OrbitPersistError):
    code = "unsupported_validation"
