"""Independent checks of a computed periodic solution.

:func:`method_of_steps` integrates the delay equation forward in time from
the periodic history ``x(t) = K(omega t)``, ``t <= 0``, and measures how far
the trajectory drifts from the parameterized orbit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DivergenceError, InvalidInputError, UnsupportedValidationError
from .gamma import invariance_residual
from .integrate import hermite
from .periodic import PeriodicSamples, trig_eval
from .perturbation import PerturbationSpec, _gl

__all__ = ["ValidationReport", "method_of_steps", "invariance_residual"]


@dataclass(frozen=True)
class ValidationReport:
    max_deviation: float
    residual_time_domain: float
    periodicity_defect: float
    per_period_deviation: list = field(default_factory=list)
    step: float = 0.0
    periods: int = 1

    def to_json(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "residual_time_domain": self.residual_time_domain,
            "periodicity_defect": self.periodicity_defect,
            "per_period_deviation": list(self.per_period_deviation),
            "step": self.step,
            "periods": self.periods,
        }


class _History:
    """Periodic history for ``t <= 0`` followed by the RK4 dense output."""

    def __init__(self, K: PeriodicSamples, omega: float, h: float, steps: int, n: int):
        self.K = K
        self.omega = omega
        self.h = h
        self.x = np.empty((steps + 1, n))
        self.dx = np.empty((steps + 1, n))
        self.filled = 0

    def __call__(self, s: float) -> np.ndarray:
        if s <= 0.0:
            return trig_eval(self.K, self.omega * s)
        j = int(s // self.h)
        sigma = s / self.h - j
        if j + 1 == self.filled and sigma < 1e-9:
            return self.x[j]
        if j + 1 >= self.filled:
            raise UnsupportedValidationError(
                "delayed argument reaches beyond the completed steps; the delay is shorter than the step"
            )
        return hermite(sigma, self.h, self.x[j], self.x[j + 1], self.dx[j], self.dx[j + 1])


def _min_lag(spec: PerturbationSpec, K: PeriodicSamples) -> float:
    d = spec.delay
    kind = spec.kind
    if kind == "constant_delay":
        return float(d["r"])
    if kind == "small_delay":
        return float(spec.epsilon * d["r"])
    if kind == "state_dependent":
        return float(np.min(np.asarray(d["r"](K.values), dtype=float)))
    if kind == "distributed":
        lags = [-lag for _, lag in d.get("atoms", ())]
        lags += [-x for _, a, b in d.get("segments", ()) for x in (a, b)]
        return min(lags) if lags else math.inf
    raise UnsupportedValidationError(f"{kind} delays cannot be integrated forward in time")


def _make_rhs(field_, spec, hist: _History, K):
    eps = 0.0 if spec is None else spec.epsilon
    if spec is None or eps == 0.0:
        return lambda x, t: field_(x, t)
    gamma = np.asarray(spec.gamma, dtype=float)
    kind = spec.kind
    d = spec.delay
    if kind == "constant_delay":
        r = float(d["r"])
        return lambda x, t: field_(x, t) + eps * spec.coupling(x, hist(t - r), gamma)
    if kind == "state_dependent":
        rfun = d["r"]
        return lambda x, t: field_(x, t) + eps * spec.coupling(x, hist(t - float(rfun(x))), gamma)
    if kind == "small_delay":
        g = spec.g
        r = float(d["r"])
        # x' = g(x(t - eps r)); the undelayed field is not added
        return lambda x, t: g(hist(t - eps * r))
    if kind == "distributed":
        atoms = list(d.get("atoms", ()))
        segs = list(d.get("segments", ()))
        s_gl, w_gl = _gl()

        def rhs(x, t):
            y = np.zeros_like(x)
            for w, lag in atoms:
                y = y + w * hist(t + lag)
            for density, a, b in segs:
                for sj, wj in zip(s_gl, w_gl):
                    y = y + density * (b - a) * wj * hist(t + a + (b - a) * sj)
            return field_(x, t) + eps * spec.coupling(x, y, gamma)

        return rhs
    raise UnsupportedValidationError(f"{kind} delays cannot be integrated forward in time")


def method_of_steps(
    field_,
    spec: PerturbationSpec | None,
    K: PeriodicSamples,
    omega: float,
    periods: int = 3,
    step: float | None = None,
) -> ValidationReport:
    """Integrate the delay equation from the periodic history and compare.

    Parameters
    ----------
    field_ : VectorField
    spec : PerturbationSpec or None
    K : PeriodicSamples
        Computed orbit; ``x(t) = K(omega t)`` is the history for ``t <= 0``.
    omega : float
    periods : int
        Integration horizon in periods; deviations are reported per period.
    step : float, optional
        RK4 step, rounded down so a period holds an integer number of steps.
        Defaults to ``period / (8 N)`` and is capped by the shortest lag.

    Raises
    ------
    UnsupportedValidationError
        Forward-looking, mixed or implicit delays.
    """
    if periods < 1:
        raise InvalidInputError("periods must be >= 1")
    T = 1.0 / omega
    lag_min = math.inf if spec is None or spec.epsilon == 0.0 else _min_lag(spec, K)
    if lag_min < 0:
        raise UnsupportedValidationError("lags pointing to the future cannot be validated by time stepping")
    if spec is not None and spec.epsilon != 0.0 and spec.kind == "state_dependent" and lag_min == 0:
        raise UnsupportedValidationError("vanishing state-dependent delay")
    if step is None:
        step = T / (8 * K.N)
    if lag_min < math.inf:
        step = min(step, lag_min)
    per = max(1, math.ceil(T / step - 1e-9))
    h = T / per
    steps = per * periods
    hist = _History(K, omega, h, steps, K.n)
    rhs = _make_rhs(field_, spec, hist, K)
    x = trig_eval(K, 0.0)
    hist.x[0] = x
    k1 = np.asarray(rhs(x, 0.0), dtype=float)
    hist.dx[0] = k1
    hist.filled = 1
    for i in range(steps):
        t = i * h
        # step <= shortest lag keeps every delayed lookup in completed steps
        k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = rhs(x + h * k3, t + h)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"method of steps produced a non-finite state at t = {t + h:.6g}")
        hist.x[i + 1] = x
        hist.filled = i + 2
        k1 = np.asarray(rhs(x, t + h), dtype=float)
        hist.dx[i + 1] = k1
    ts = h * np.arange(steps + 1)
    ref = trig_eval(K, omega * ts)
    dev = np.linalg.norm(hist.x - ref, axis=1)
    per_period = [float(dev[p * per:(p + 1) * per + 1].max()) for p in range(periods)]
    # residual at step midpoints from the dense output and its derivative
    xm = hermite(0.5, h, hist.x[:-1], hist.x[1:], hist.dx[:-1], hist.dx[1:])
    dxm = 1.5 * (hist.x[1:] - hist.x[:-1]) / h - 0.25 * (hist.dx[:-1] + hist.dx[1:])
    res = 0.0
    for i in range(steps):
        res = max(res, float(np.linalg.norm(dxm[i] - rhs(xm[i], (i + 0.5) * h))))
    return ValidationReport(
        max_deviation=per_period[0],
        residual_time_domain=res,
        periodicity_defect=float(np.linalg.norm(hist.x[per] - hist.x[0])),
        per_period_deviation=per_period,
        step=h,
        periods=periods,
    )
