"""Perturbation functionals evaluated along a parameterized periodic orbit.

Every kind turns ``(K, omega)`` into nodal values of ``P(K, omega, gamma,
theta)``, the term multiplied by ``epsilon`` in the invariance equation.
Substituting ``x(t) = K(theta + omega t)`` turns a time lag ``r`` into the
phase lag ``omega r``.
"""
from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import ConvergenceError, InvalidInputError, PerturbationError, SpeedConditionError
from .periodic import PeriodicSamples, c0_norm, spectral_derivative, trig_eval

__all__ = [
    "KINDS",
    "PerturbationSpec",
    "DelayedEval",
    "BallWarning",
    "eval_P",
    "delayed_arguments",
    "evaluate_delayed",
    "small_delay_P",
    "implicit_delay_tau",
    "identity_coupling",
    "scaled_coupling",
    "COUPLINGS",
]

KINDS = ("constant_delay", "state_dependent", "distributed", "small_delay", "implicit_pairwise")

_GL_ORDER = 8


class BallWarning(UserWarning):
    """``(K, omega)`` left the advisory ball around the seed."""


def identity_coupling(x, y, gamma):
    return y


def scaled_coupling(x, y, gamma):
    return gamma[0] * y


COUPLINGS = {"identity": identity_coupling, "scaled": scaled_coupling}


@dataclass(frozen=True)
class PerturbationSpec:
    """Description of the perturbation functional.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`.
    coupling : callable
        ``coupling(x, y, gamma)`` vectorized over leading axes, where ``x``
        is ``K(theta)`` and ``y`` the delayed value (or weighted sum).
        Ignored by ``small_delay``.
    delay : dict
        Kind-specific data:

        * ``constant_delay``: ``r`` (float, time units; negative looks ahead)
        * ``state_dependent``: ``r`` (callable ``x -> r(x)``)
        * ``distributed``: ``atoms`` list of ``(weight, lag)`` and optional
          ``segments`` list of ``(density, lag_start, lag_stop)``; a past
          value has negative lag
        * ``small_delay``: ``r`` (float); uses the field ``g``
        * ``implicit_pairwise``: ``c`` (speed), ``dim`` (block size) and
          ``pairs`` list of ``(i, j)`` block indices
    gamma : sequence of float
    epsilon : float
    g : VectorField, optional
        Right-hand side of the small-delay equation.
    h_max : float
        Largest admissible phase lag ``|omega r|``.
    ball : (rho, delta), optional
        Advisory radius around the seed for ``K`` and ``omega``.
    """

    kind: str
    coupling: Callable = identity_coupling
    delay: dict = field(default_factory=dict)
    gamma: tuple = ()
    epsilon: float = 0.0
    g: object = None
    h_max: float = math.inf
    ball: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown perturbation kind {self.kind!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise InvalidInputError("epsilon must be a finite nonnegative real")
        object.__setattr__(self, "gamma", tuple(float(x) for x in self.gamma))
        if self.kind == "distributed":
            for w, lag in self.delay.get("atoms", ()):
                if not (math.isfinite(w) and math.isfinite(lag)):
                    raise InvalidInputError("distributed atoms must be finite")

    def with_params(self, epsilon=None, gamma=None) -> "PerturbationSpec":
        kw = {}
        if epsilon is not None:
            kw["epsilon"] = float(epsilon)
        if gamma is not None:
            kw["gamma"] = tuple(gamma)
        return dataclasses.replace(self, **kw)

    @property
    def backward_only(self) -> bool:
        """Whether every lag points to the past (needed for time stepping)."""
        d = self.delay
        if self.kind == "constant_delay":
            return d["r"] >= 0
        if self.kind == "small_delay":
            return d["r"] >= 0
        if self.kind == "distributed":
            lags = [lag for _, lag in d.get("atoms", ())]
            lags += [x for _, a, b in d.get("segments", ()) for x in (a, b)]
            return all(lag <= 0 for lag in lags)
        # state-dependent sign is checked along the orbit
        return self.kind == "state_dependent"


@dataclass(frozen=True)
class DelayedEval:
    """Per-node delayed argument and perturbation value."""

    theta: np.ndarray
    lag_arg: np.ndarray
    value: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.lag_arg)):
            raise PerturbationError("delayed argument is not finite")


def _gl(order=_GL_ORDER):
    s, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (s + 1), 0.5 * w


def _check_lag(spec, lag_phase):
    worst = float(np.max(np.abs(lag_phase))) if np.size(lag_phase) else 0.0
    if worst > spec.h_max:
        raise PerturbationError(f"phase lag {worst:.6g} exceeds h_max = {spec.h_max:.6g}")


def delayed_arguments(spec: PerturbationSpec, K: PeriodicSamples, omega: float) -> np.ndarray:
    """Delayed phases ``theta - omega r`` per node (single-lag kinds only)."""
    theta = K.nodes
    if spec.kind in ("constant_delay", "small_delay"):
        return theta - omega * spec.delay["r"] * np.ones_like(theta)
    if spec.kind == "state_dependent":
        r = np.asarray(spec.delay["r"](K.values), dtype=float).reshape(K.N)
        return theta - omega * r
    raise InvalidInputError(f"kind {spec.kind!r} has no single delayed argument")


def _checked(values, n):
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != n:
        raise PerturbationError(f"coupling returned shape {v.shape}, expected last axis {n}")
    if not np.all(np.isfinite(v)):
        raise PerturbationError("coupling produced non-finite values")
    return v


def _distributed_sum(spec, K, omega):
    theta = K.nodes
    d = spec.delay
    y = np.zeros(K.values.shape)
    lags = []
    for w, lag in d.get("atoms", ()):
        lags.append(lag)
        y += w * trig_eval(K, theta + omega * lag)
    s, ws = _gl()
    for density, a, b in d.get("segments", ()):
        lags += [a, b]
        for sj, wj in zip(s, ws):
            lag = a + (b - a) * sj
            y += density * (b - a) * wj * trig_eval(K, theta + omega * lag)
    _check_lag(spec, omega * np.asarray(lags, dtype=float))
    return y


def small_delay_P(spec: PerturbationSpec, K: PeriodicSamples, omega: float) -> PeriodicSamples:
    """``-int_0^1 Dg(K(th - eps s omega r)) DK(th - eps s omega r) omega r ds``.

    Gauss-Legendre in ``s``. Multiplying by ``epsilon`` gives
    ``g(K(theta - eps omega r)) - g(K(theta))``.
    """
    if spec.kind != "small_delay":
        raise InvalidInputError("small_delay_P needs a small_delay spec")
    g = spec.g
    if g is None:
        raise InvalidInputError("small_delay spec has no field g")
    if getattr(g, "time_periodic", False):
        raise InvalidInputError("small delays are only supported for autonomous fields")
    r = float(spec.delay["r"])
    _check_lag(spec, np.array([spec.epsilon * omega * r]))
    theta = K.nodes
    DK = spectral_derivative(K)
    s, ws = _gl()
    out = np.zeros(K.values.shape)
    for sj, wj in zip(s, ws):
        arg = theta - spec.epsilon * sj * omega * r
        Kd = trig_eval(K, arg)
        DKd = trig_eval(DK, arg)
        out -= wj * np.einsum("kij,kj->ki", g.jacobian(Kd), DKd) * omega * r
    return PeriodicSamples(_checked(out, K.n))


def _ball_check(spec, K, omega, seed):
    if spec.ball is None or seed is None:
        return
    rho, delta = spec.ball
    dK = c0_norm(K.values - seed.K0.values)
    dw = abs(omega - seed.omega0)
    if dK > rho or dw > delta:
        warnings.warn(
            f"(K, omega) outside the ball: |K-K0| = {dK:.3g} (rho {rho:g}), |omega-omega0| = {dw:.3g} (delta {delta:g})",
            BallWarning,
            stacklevel=3,
        )


def eval_P(spec: PerturbationSpec, K: PeriodicSamples, omega: float, seed=None) -> PeriodicSamples:
    """Nodal values of the perturbation functional (without the ``epsilon``)."""
    _ball_check(spec, K, omega, seed)
    gamma = np.asarray(spec.gamma, dtype=float)
    x = K.values
    kind = spec.kind
    if kind == "small_delay":
        return small_delay_P(spec, K, omega)
    if kind in ("constant_delay", "state_dependent"):
        arg = delayed_arguments(spec, K, omega)
        _check_lag(spec, K.nodes - arg)
        y = trig_eval(K, arg)
        return PeriodicSamples(_checked(spec.coupling(x, y, gamma), K.n))
    if kind == "distributed":
        y = _distributed_sum(spec, K, omega)
        return PeriodicSamples(_checked(spec.coupling(x, y, gamma), K.n))
    # implicit_pairwise
    d = spec.delay
    total = np.zeros(x.shape)
    for i, j in d["pairs"]:
        tau = _implicit_tau_periodic(K, omega, float(d["c"]), int(d["dim"]), int(i), int(j))
        _check_lag(spec, omega * tau)
        y = trig_eval(K, K.nodes - omega * tau)
        total += _checked(spec.coupling(x, y, gamma), K.n)
    return PeriodicSamples(total)


def evaluate_delayed(spec: PerturbationSpec, K: PeriodicSamples, omega: float) -> DelayedEval:
    """Per-node ``DelayedEval`` record for single-lag kinds."""
    arg = delayed_arguments(spec, K, omega)
    return DelayedEval(K.nodes, arg, eval_P(spec, K, omega).values)


# implicit delays -----------------------------------------------------------


def _implicit_tau_periodic(K, omega, c, dim, i, j, tol=1e-13, maxiter=200):
    """Solve ``tau = |K_i(theta) - K_j(theta - omega tau)| / c`` at every node."""
    sl_i = slice(i * dim, (i + 1) * dim)
    sl_j = slice(j * dim, (j + 1) * dim)
    if sl_i.stop > K.n or sl_j.stop > K.n:
        raise InvalidInputError("implicit pair index outside the state")
    Kj = PeriodicSamples(K.values[:, sl_j])
    speed = omega * float(np.max(np.linalg.norm(spectral_derivative(Kj).values, axis=1)))
    xi1 = speed / c
    if xi1 >= 1:
        raise SpeedConditionError(f"speed condition fails: max |q_j'| / c = {xi1:.4g} >= 1")
    qi = K.values[:, sl_i]
    theta = K.nodes
    tau = np.linalg.norm(qi - Kj.values, axis=1) / c
    for _ in range(maxiter):
        new = np.linalg.norm(qi - trig_eval(Kj, theta - omega * tau), axis=1) / c
        if np.max(np.abs(new - tau)) < tol:
            return new
        tau = new
    raise ConvergenceError(f"implicit delay iteration did not converge in {maxiter} steps")


def implicit_delay_tau(
    q_i: Callable,
    q_j: Callable,
    t: float,
    c: float,
    tol: float = 1e-13,
    maxiter: int = 200,
    xi1: float | None = None,
    full_output: bool = False,
):
    """Retarded time ``tau`` with ``tau = |q_i(t) - q_j(t - tau)| / c``.

    Fixed-point iteration from ``tau_0 = |q_i(t) - q_j(t)| / c``. When
    ``xi1`` (a bound on ``|q_j'| / c``) is not given, it is measured by
    central differences of ``q_j`` over the window the iteration visited.

    Returns
    -------
    tau : float
    info : dict
        Only with ``full_output``: ``iterations`` and ``xi1``.

    Raises
    ------
    SpeedConditionError
        ``xi1 >= 1``.
    ConvergenceError
        No convergence in ``maxiter`` iterations.
    """
    if not c > 0:
        raise InvalidInputError("c must be positive")
    qi = np.asarray(q_i(t), dtype=float)

    def step(tau):
        return float(np.linalg.norm(qi - np.asarray(q_j(t - tau), dtype=float))) / c

    tau = step(0.0)
    iters = 0
    converged = False
    visited = [tau]
    for iters in range(1, maxiter + 1):
        new = step(tau)
        visited.append(new)
        done = abs(new - tau) < tol
        tau = new
        if done:
            converged = True
            break
    if xi1 is None:
        xi1 = _measure_speed(q_j, t - max(visited) - 1e-9, t) / c
    if xi1 >= 1:
        raise SpeedConditionError(f"speed condition fails: xi1 = {xi1:.4g} >= 1")
    if not converged:
        raise ConvergenceError(f"implicit delay iteration did not converge in {maxiter} steps")
    if full_output:
        return tau, {"iterations": iters, "xi1": float(xi1)}
    return tau


def _measure_speed(q, t0, t1, samples: int = 257) -> float:
    ts = np.linspace(t0, t1, samples)
    h = 1e-6 * max(1.0, abs(t1))
    best = 0.0
    for s in ts:
        d = (np.asarray(q(s + h), dtype=float) - np.asarray(q(s - h), dtype=float)) / (2 * h)
        best = max(best, float(np.linalg.norm(d)))
    return best
