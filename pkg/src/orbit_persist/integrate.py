"""Fixed-step classical RK4 with cubic-Hermite dense output."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DivergenceError, InvalidInputError

__all__ = ["Trajectory", "integrate", "rk4_solve", "hermite"]


def hermite(s, h, x0, x1, d0, d1):
    """Cubic Hermite interpolant on one step of length ``h`` at ``s in [0,1]``."""
    s = np.asarray(s, dtype=float)[..., None]
    h00 = (1 + 2 * s) * (1 - s) ** 2
    h10 = s * (1 - s) ** 2
    h01 = s * s * (3 - 2 * s)
    h11 = s * s * (s - 1)
    return h00 * x0 + h10 * h * d0 + h01 * x1 + h11 * h * d1


@dataclass(frozen=True)
class Trajectory:
    """Discrete RK4 solution with slopes stored for dense output.

    Attributes
    ----------
    t : ndarray, shape (M+1,)
    x : ndarray, shape (M+1, n)
    dx : ndarray, shape (M+1, n)
        Right-hand side evaluated at each stored state.
    """

    t: np.ndarray
    x: np.ndarray
    dx: np.ndarray

    def __call__(self, tq):
        tq = np.asarray(tq, dtype=float)
        scalar = tq.ndim == 0
        tq = np.atleast_1d(tq)
        t = self.t
        if np.any(tq < t[0] - 1e-12 * max(1.0, abs(t[0]))) or np.any(
            tq > t[-1] + 1e-12 * max(1.0, abs(t[-1]))
        ):
            raise InvalidInputError("dense output requested outside the integrated span")
        idx = np.clip(np.searchsorted(t, tq, side="right") - 1, 0, t.size - 2)
        h = t[idx + 1] - t[idx]
        s = (tq - t[idx]) / h
        out = hermite(s, h[:, None], self.x[idx], self.x[idx + 1], self.dx[idx], self.dx[idx + 1])
        return out[0] if scalar else out


def rk4_solve(rhs, x0, t0: float, t1: float, steps: int) -> Trajectory:
    """Integrate ``x' = rhs(x, t)`` with ``steps`` equal RK4 steps."""
    if steps < 1:
        raise InvalidInputError("need at least one step")
    x = np.array(x0, dtype=float)
    h = (t1 - t0) / steps
    ts = t0 + h * np.arange(steps + 1)
    ts[-1] = t1
    xs = np.empty((steps + 1,) + x.shape)
    dxs = np.empty_like(xs)
    xs[0] = x
    k1 = np.asarray(rhs(x, ts[0]), dtype=float)
    dxs[0] = k1
    for i in range(steps):
        t = ts[i]
        k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = rhs(x + h * k3, t + h)
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"non-finite state at t = {ts[i + 1]:.6g}")
        k1 = np.asarray(rhs(x, ts[i + 1]), dtype=float)
        xs[i + 1] = x
        dxs[i + 1] = k1
    return Trajectory(ts, xs, dxs)


def integrate(field, x0, t_span, step: float) -> Trajectory:
    """RK4 trajectory of ``field`` over ``t_span`` with step close to ``step``.

    The step is shortened so an integer number of steps covers the span.
    """
    if not step > 0:
        raise InvalidInputError("step must be positive")
    t0, t1 = map(float, t_span)
    steps = max(1, math.ceil((t1 - t0) / step - 1e-9))
    return rk4_solve(lambda x, t: field(x, t), x0, t0, t1, steps)
