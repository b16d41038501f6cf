"""Fixed-point solvers for the perturbed invariance equation.

Unknowns are corrections ``(omega_hat, K_hat)`` with ``K = K0 + K_hat`` and
``omega = omega0 + omega_hat``. Moving the linear part to the left,

    omega0 DK_hat - Df(K0) K_hat = B - omega_hat DK0,
    B = N(K_hat) + eps P(K, omega) - omega_hat DK_hat,

where ``N`` is the Taylor remainder of ``f`` around ``K0``. Each operator
maps a guess to the periodic solution of this linear equation:

* ``gamma``: picks ``omega_hat`` so a periodic solution exists and fixes the
  phase by starting it in the spectral complement of the flow direction;
* ``upsilon``: time-periodic fields, frequency locked to the forcing;
* ``hyperbolic``: same solution assembled from stable/unstable pieces summed
  over past and future periods.

All three use the discrete RK4 propagator of
:class:`orbit_persist.orbit.LinearizedFlow`, so fundamental matrices,
particular solutions and periodicity conditions agree to roundoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConvergenceError,
    DivergenceError,
    H1Violation,
    InvalidInputError,
    PeriodicityDefectError,
    TruncationHorizonError,
)
from .floquet import AUTONOMOUS, NON_AUTONOMOUS, FloquetData, analyze, hyperbolic_split, solve_bordered
from .periodic import PeriodicSamples, c0_distance, c0_norm, norm_report, spectral_derivative
from .perturbation import PerturbationSpec, eval_P

__all__ = [
    "SolverConfig",
    "GammaState",
    "SolveReport",
    "assemble_B",
    "gamma1",
    "gamma2",
    "invariance_residual",
    "solve",
    "solve_fixed_point",
    "upsilon_solve",
    "hyperbolic_solve",
    "OPERATORS",
]

OPERATORS = ("gamma", "upsilon", "hyperbolic")

# step ratios whose numerator is below this many ulps of the state carry
# only roundoff and are left out of the contraction estimate
_ROUNDOFF_ULPS = 64


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls.

    Parameters
    ----------
    operator : {"gamma", "upsilon", "hyperbolic"}
    tol_fixed : float
        Stop when successive iterates are closer than this (C0 distance).
    max_iters : int
    tol_floquet : float
    tol_trunc : float
        Tail size at which the hyperbolic period sums are cut.
    trunc_factor : float
        Multiplies the hyperbolic truncation horizon (for sensitivity runs).
    max_trunc_periods : int
    ell : int
        Derivative depth of the norm diagnostics.
    defect_tol : float
        Relative periodicity defect accepted from one operator application.
    divergence_window : int
        Consecutive step increases treated as divergence.
    """

    operator: str = "gamma"
    tol_fixed: float = 1e-12
    max_iters: int = 200
    tol_floquet: float = 1e-6
    tol_trunc: float = 1e-14
    trunc_factor: float = 1.0
    max_trunc_periods: int = 10_000
    ell: int = 3
    defect_tol: float = 1e-8
    divergence_window: int = 5

    def __post_init__(self):
        if self.operator not in OPERATORS:
            raise InvalidInputError(f"operator must be one of {OPERATORS}")
        for name in ("tol_fixed", "tol_floquet", "tol_trunc", "trunc_factor", "defect_tol"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.max_iters < 1 or self.divergence_window < 1:
            raise InvalidInputError("max_iters and divergence_window must be >= 1")
        if self.ell < 0:
            raise InvalidInputError("ell must be >= 0")


@dataclass(frozen=True)
class GammaState:
    """Current iterate and its diagnostics."""

    omega_hat: float
    K_hat: PeriodicSamples
    iter: int = 0
    d_last: float = math.nan
    mu_hat: float = math.nan
    residual: float = math.nan

    @property
    def diverging(self) -> bool:
        return self.mu_hat >= 1


@dataclass
class SolveReport:
    """Result of a fixed-point solve.

    ``aposteriori_cj[j-1]`` bounds the ``C^j`` distance from the initial
    guess to the fixed point through interpolation between the ``C^0``
    bound and the measured ``C^{ell+Lip}`` size of the correction, with
    interpolation constant 1. It is a diagnostic, not a certified bound.
    """

    K: PeriodicSamples
    omega: float
    omega0: float
    epsilon: float
    residual: float
    mu_hat: float
    aposteriori_c0: float
    aposteriori_cj: list
    floquet_used: FloquetData
    iters: int
    operator: str
    d_first: float
    distances: list
    correction_c0: float
    periodicity_defect: float
    omega_hat: float = 0.0
    K_hat: PeriodicSamples | None = None
    extra: dict = field(default_factory=dict)

    def state(self) -> GammaState:
        return GammaState(self.omega_hat, self.K_hat, self.iters, self.distances[-1] if self.distances else 0.0, self.mu_hat, self.residual)

    def to_json(self) -> dict:
        return {
            "operator": self.operator,
            "epsilon": self.epsilon,
            "omega": self.omega,
            "omega0": self.omega0,
            "omega_hat": self.omega_hat,
            "residual": self.residual,
            "mu_hat": self.mu_hat,
            "iters": self.iters,
            "aposteriori_c0": _finite_or_none(self.aposteriori_c0),
            "aposteriori_cj": [_finite_or_none(x) for x in self.aposteriori_cj],
            "aposteriori_label": "diagnostic",
            "d_first": self.d_first,
            "step_distances": list(self.distances),
            "correction_c0": self.correction_c0,
            "periodicity_defect": self.periodicity_defect,
            "extra": self.extra,
        }


def _finite_or_none(x):
    return float(x) if math.isfinite(x) else None


def _times(seed, N):
    return np.arange(N) / N / seed.omega0


def _as_state(state, seed):
    if state is None:
        return 0.0, PeriodicSamples.zeros(seed.K0.N, seed.K0.n)
    if isinstance(state, GammaState):
        return float(state.omega_hat), state.K_hat
    omega_hat, K_hat = state
    return float(omega_hat), K_hat


def assemble_B(seed, spec: PerturbationSpec, state=None) -> PeriodicSamples:
    """Right-hand side ``N(K_hat) + eps P(K0 + K_hat, omega0 + omega_hat) - omega_hat DK_hat``.

    ``state`` is a :class:`GammaState`, an ``(omega_hat, K_hat)`` pair or
    ``None`` for the zero correction.
    """
    omega_hat, K_hat = _as_state(state, seed)
    K0 = seed.K0
    if K_hat.values.shape != K0.values.shape:
        raise InvalidInputError("correction does not match the seed grid")
    fld = seed.field
    t = _times(seed, K0.N)
    x0 = K0.values
    xh = K_hat.values
    nonlin = fld(x0 + xh, t) - fld(x0, t) - np.einsum("kij,kj->ki", fld.jacobian(x0, t), xh)
    B = nonlin - omega_hat * spectral_derivative(K_hat).values
    if spec is not None and spec.epsilon != 0.0:
        K = PeriodicSamples(x0 + xh)
        B = B + spec.epsilon * eval_P(spec, K, seed.omega0 + omega_hat, seed=seed).values
    return PeriodicSamples(B)


def invariance_residual(seed, spec: PerturbationSpec | None, K: PeriodicSamples, omega: float) -> float:
    """``max_k |omega DK - f(K, theta_k / omega) - eps P(K, omega)|``."""
    t = K.nodes / omega
    R = omega * spectral_derivative(K).values - seed.field(K.values, t)
    if spec is not None and spec.epsilon != 0.0:
        R = R - spec.epsilon * eval_P(spec, K, omega).values
    return c0_norm(R)


def _frequency_component(fd: FloquetData, p_b, p_dk, dk0) -> float:
    # ratio of parallel components: exact 1 for b = DK0 by construction
    num = (fd.proj_parallel @ p_b) @ dk0
    den = (fd.proj_parallel @ p_dk) @ dk0
    return float(num / den)


def gamma1(seed, fd: FloquetData, B: PeriodicSamples) -> float:
    """Frequency correction making the linear equation solvable.

    Computed from the propagated parallel components of ``B`` and of
    ``DK0``; equals ``<int Pi_par Phi(1;s) B(s) ds, DK0(0)> / |DK0(0)|^2``
    up to discretization error.
    """
    if fd.mode != AUTONOMOUS:
        raise InvalidInputError("gamma1 needs autonomous Floquet data")
    z = seed.flow.propagate(np.stack([B.values, seed.DK0.values], axis=-1))
    return _frequency_component(fd, z[-1, :, 0], z[-1, :, 1], seed.DK0.values[0])


def _periodic_part(seed, fd, z, defect_tol):
    Phi = seed.flow.node_matrices
    u0 = solve_bordered(fd, z[-1])
    v = z + np.einsum("kij,j->ki", Phi, u0)
    defect = float(np.linalg.norm(v[-1] - v[0]))
    scale = 1.0 + c0_norm(v)
    if defect > defect_tol * scale:
        raise PeriodicityDefectError(f"periodicity defect {defect:.3e} exceeds {defect_tol:g} x {scale:.3g}")
    return v, defect


def gamma2(seed, fd: FloquetData, B: PeriodicSamples, gamma1_value: float, defect_tol: float = 1e-8) -> PeriodicSamples:
    """Periodic solution of ``omega0 v' = Df(K0) v + B - gamma1 DK0`` with ``v(0)`` in the complement."""
    b = B.values - gamma1_value * seed.DK0.values
    z = seed.flow.propagate(b)
    v, _ = _periodic_part(seed, fd, z, defect_tol)
    return PeriodicSamples(v[:-1])


class _Map:
    """One operator application ``(omega_hat, K_hat) -> (omega_hat', K_hat')``."""

    def __init__(self, seed, spec, fd, config: SolverConfig, kind: str):
        self.seed = seed
        self.spec = spec
        self.fd = fd
        self.config = config
        self.kind = kind
        self.z_dk = seed.flow.propagate(seed.DK0) if fd.mode == AUTONOMOUS else None
        self.info = {}
        if kind == "hyperbolic":
            self._setup_hyperbolic()

    def _setup_hyperbolic(self):
        hs = self.fd.hyperbolic_split or hyperbolic_split(self.fd, self.config.tol_floquet)
        self.hs = hs
        mu = hs.mu_min
        if mu is None:
            periods = 0
        else:
            periods = math.ceil(self.config.trunc_factor * math.log(1.0 / self.config.tol_trunc) / mu)
        if periods > self.config.max_trunc_periods:
            raise TruncationHorizonError(
                f"truncation horizon {periods} periods exceeds {self.config.max_trunc_periods} (spectral gap {mu:.3g})"
            )
        self.periods = periods
        Phi = self.seed.flow.node_matrices
        self.Phi_inv = np.linalg.inv(Phi)
        M = self.fd.monodromy
        Es, Eu = hs.stable_basis, hs.unstable_basis
        T = np.hstack([Es, Eu, hs.center_basis])
        Tinv = np.linalg.inv(T)
        ds, du = Es.shape[1], Eu.shape[1]
        self.coef_s = Tinv[:ds]
        self.coef_u = Tinv[ds:ds + du]
        self.R_s = self.coef_s @ M @ Es
        self.R_u_inv = np.linalg.inv(self.coef_u @ M @ Eu) if du else np.zeros((0, 0))
        self.info["trunc_periods"] = periods

    def __call__(self, omega_hat, K_hat):
        B = assemble_B(self.seed, self.spec, (omega_hat, K_hat))
        z = self.seed.flow.propagate(B)
        if self.fd.mode == AUTONOMOUS:
            w = _frequency_component(self.fd, z[-1], self.z_dk[-1], self.seed.DK0.values[0])
            z = z - w * self.z_dk
        else:
            w = 0.0
        if self.kind == "hyperbolic":
            v, defect = self._hyperbolic(z)
        else:
            v, defect = _periodic_part(self.seed, self.fd, z, self.config.defect_tol)
        return w, PeriodicSamples(v[:-1]), defect

    def _hyperbolic(self, z):
        hs = self.hs
        p = z[-1]
        Es, Eu = hs.stable_basis, hs.unstable_basis
        a = self.coef_s @ p
        acc_s = np.zeros_like(a)
        for _ in range(self.periods):
            acc_s += a
            a = self.R_s @ a
        b = self.coef_u @ p
        acc_u = np.zeros_like(b)
        for _ in range(self.periods):
            b = self.R_u_inv @ b
            acc_u += b
        tail_s = Es @ acc_s
        tail_u = Eu @ acc_u
        Phi = self.seed.flow.node_matrices
        # moving projections Phi_k P Phi_k^{-1} applied to the particular part
        zq = np.einsum("kij,kj->ki", self.Phi_inv, z)
        Ks = np.einsum("kij,kj->ki", Phi, zq @ hs.proj_stable.T + tail_s)
        Ku = np.einsum("kij,kj->ki", Phi, zq @ hs.proj_unstable.T - tail_u)
        Kc = np.einsum("kij,kj->ki", Phi, zq @ hs.proj_center.T)
        v = Ks + Ku + Kc
        defect = float(np.linalg.norm(v[-1] - v[0]))
        scale = 1.0 + c0_norm(v)
        if defect > self.config.defect_tol * scale:
            raise PeriodicityDefectError(f"periodicity defect {defect:.3e} in hyperbolic assembly")
        self.info["stable_c0"] = c0_norm(Ks[:-1])
        self.info["unstable_c0"] = c0_norm(Ku[:-1])
        self.info["center_c0"] = c0_norm(Kc[:-1])
        return v, defect


def _step_ratios(dists, scale):
    floor = _ROUNDOFF_ULPS * np.finfo(float).eps * scale
    return [dists[i] / dists[i - 1] for i in range(1, len(dists)) if dists[i - 1] > 0 and dists[i] > floor]


def _contraction_estimate(dists, scale):
    ratios = _step_ratios(dists, scale)
    if not ratios:
        return 0.0
    return float(np.median(ratios[-5:]))


def _iterate(op: _Map, seed, spec, fd, config: SolverConfig, init, name: str) -> SolveReport:
    omega_hat, K_hat = _as_state(init, seed)
    w_init, K_init = omega_hat, K_hat
    dists = []
    increases = 0
    defect = 0.0
    scale = max(1.0, c0_norm(seed.K0))
    converged = False
    for it in range(1, config.max_iters + 1):
        w_new, K_new, defect = op(omega_hat, K_hat)
        if not (math.isfinite(w_new) and np.all(np.isfinite(K_new.values))):
            raise DivergenceError(f"non-finite iterate at step {it}")
        d = c0_distance((omega_hat, K_hat), (w_new, K_new))
        dists.append(d)
        omega_hat, K_hat = w_new, K_new
        if d < config.tol_fixed:
            converged = True
            break
        increases = increases + 1 if len(dists) > 1 and d > dists[-2] else 0
        if increases >= config.divergence_window:
            report = _report(op, seed, spec, fd, config, name, w_init, K_init, omega_hat, K_hat, dists, defect, scale)
            raise DivergenceError(
                f"step distance grew {increases} times in a row (last {d:.3e}, iteration {it})", report=report
            )
    report = _report(op, seed, spec, fd, config, name, w_init, K_init, omega_hat, K_hat, dists, defect, scale)
    if not converged:
        raise ConvergenceError(
            f"no convergence in {config.max_iters} iterations (last step {dists[-1]:.3e})", report=report
        )
    return report


def _report(op, seed, spec, fd, config, name, w_init, K_init, omega_hat, K_hat, dists, defect, scale):
    mu_hat = _contraction_estimate(dists, scale)
    d_first = dists[0]
    c0_bound = d_first / (1.0 - mu_hat) if mu_hat < 1 else math.inf
    # the median tracks the late, local rate; early steps can contract more
    # slowly, so the largest observed ratio gives a safer bound as well
    mu_max = max(_step_ratios(dists, scale), default=0.0)
    c0_safe = d_first / (1.0 - mu_max) if mu_max < 1 else math.inf
    corr = K_hat - K_init
    beta = norm_report(corr, config.ell).cl_norm
    L = config.ell + 1
    cj = []
    for j in range(1, config.ell + 1):
        if math.isfinite(c0_bound):
            cj.append(c0_bound ** ((L - j) / L) * beta ** (j / L))
        else:
            cj.append(math.inf)
    K = seed.K0 + K_hat
    omega = seed.omega0 + omega_hat
    res = invariance_residual(seed, spec, K, omega)
    return SolveReport(
        K=K,
        omega=float(omega),
        omega0=float(seed.omega0),
        epsilon=float(spec.epsilon) if spec is not None else 0.0,
        residual=res,
        mu_hat=mu_hat,
        aposteriori_c0=c0_bound,
        aposteriori_cj=cj,
        floquet_used=fd,
        iters=len(dists),
        operator=name,
        d_first=d_first,
        distances=dists,
        correction_c0=max(abs(omega_hat - w_init), c0_norm(corr)),
        periodicity_defect=defect,
        omega_hat=float(omega_hat),
        K_hat=K_hat,
        extra={**op.info, "mu_max": mu_max, "aposteriori_c0_max_ratio": _finite_or_none(c0_safe)},
    )


def solve_fixed_point(seed, spec, fd: FloquetData | None = None, config: SolverConfig | None = None, init=None) -> SolveReport:
    """Iterate the frequency-adjusting operator to its fixed point.

    Parameters
    ----------
    seed : OrbitSeed
    spec : PerturbationSpec or None
        ``None`` means no perturbation.
    fd : FloquetData, optional
        Autonomous Floquet data; computed when omitted.
    config : SolverConfig, optional
    init : GammaState or (omega_hat, K_hat), optional
        Warm start; the zero correction by default.

    Raises
    ------
    H1Violation
    DivergenceError
    ConvergenceError
    """
    config = config or SolverConfig()
    if fd is None:
        fd = analyze(seed, AUTONOMOUS, tol_floquet=config.tol_floquet)
    if fd.mode != AUTONOMOUS:
        raise H1Violation("the frequency-adjusting operator needs a simple unit multiplier")
    return _iterate(_Map(seed, spec, fd, config, "gamma"), seed, spec, fd, config, init, "gamma")


def upsilon_solve(seed, spec, fd: FloquetData | None = None, config: SolverConfig | None = None, init=None) -> SolveReport:
    """Fixed point with the frequency locked to the forcing.

    Raises
    ------
    H1ppViolation
        The monodromy has a multiplier near 1.
    """
    config = config or SolverConfig(operator="upsilon")
    if fd is None:
        fd = analyze(seed, NON_AUTONOMOUS, tol_floquet=config.tol_floquet)
    if fd.mode != NON_AUTONOMOUS:
        raise InvalidInputError("upsilon_solve needs non-autonomous Floquet data")
    if init is not None:
        init = (0.0, _as_state(init, seed)[1])
    return _iterate(_Map(seed, spec, fd, config, "upsilon"), seed, spec, fd, config, init, "upsilon")


def hyperbolic_solve(seed, spec, fd: FloquetData | None = None, config: SolverConfig | None = None, init=None) -> SolveReport:
    """Fixed point assembled from the stable/unstable splitting.

    Raises
    ------
    HyperbolicityViolation
    TruncationHorizonError
    """
    config = config or SolverConfig(operator="hyperbolic")
    if fd is None:
        mode = NON_AUTONOMOUS if seed.time_periodic else AUTONOMOUS
        fd = analyze(seed, mode, tol_floquet=config.tol_floquet)
    return _iterate(_Map(seed, spec, fd, config, "hyperbolic"), seed, spec, fd, config, init, "hyperbolic")


def solve(seed, spec, fd=None, config: SolverConfig | None = None, init=None) -> SolveReport:
    """Dispatch on ``config.operator``."""
    config = config or SolverConfig()
    fn = {"gamma": solve_fixed_point, "upsilon": upsilon_solve, "hyperbolic": hyperbolic_solve}[config.operator]
    return fn(seed, spec, fd, config, init)
