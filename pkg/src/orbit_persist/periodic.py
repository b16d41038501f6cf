"""Periodic functions on the circle T = R/Z sampled on a uniform grid.

A :class:`PeriodicSamples` stores ``g(k/N)`` for ``k = 0..N-1`` and is
interpreted through its trigonometric interpolant, which makes off-grid
evaluation (needed for delayed arguments) and differentiation spectral.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .exceptions import InvalidInputError

__all__ = [
    "PeriodicSamples",
    "NormReport",
    "trig_eval",
    "spectral_derivative",
    "c0_distance",
    "c0_norm",
    "quadrature_period",
    "periodic_trapezoid",
    "norm_report",
]


@dataclass(frozen=True, eq=False)
class PeriodicSamples:
    """Nodal values of a map T -> R^n on ``N`` equispaced nodes.

    Parameters
    ----------
    values : array_like, shape (N, n)
        Row ``k`` holds the value at ``theta_k = k / N``. A 1-D array is
        treated as a scalar function (n = 1).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise InvalidInputError("values must be an (N, n) array")
        N = v.shape[0]
        if N < 4 or N % 2:
            raise InvalidInputError(f"N must be even and >= 4, got {N}")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, func, N: int) -> "PeriodicSamples":
        """Sample ``func(theta)`` (vectorized over theta) on ``N`` nodes."""
        theta = np.arange(N) / N
        return cls(np.asarray(func(theta), dtype=float).reshape(N, -1))

    @classmethod
    def zeros(cls, N: int, n: int) -> "PeriodicSamples":
        return cls(np.zeros((N, n)))

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N) / self.N

    @cached_property
    def _rfft(self) -> np.ndarray:
        return np.fft.rfft(self.values, axis=0) / self.N

    def __call__(self, theta):
        return trig_eval(self, theta)

    def __add__(self, other):
        if isinstance(other, PeriodicSamples):
            _check_compatible(self, other)
            other = other.values
        return PeriodicSamples(self.values + other)

    def __sub__(self, other):
        if isinstance(other, PeriodicSamples):
            _check_compatible(self, other)
            other = other.values
        return PeriodicSamples(self.values - other)

    def __mul__(self, scalar):
        return PeriodicSamples(self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return PeriodicSamples(-self.values)

    def derivative(self, order: int = 1) -> "PeriodicSamples":
        return spectral_derivative(self, order)

    def shift(self, steps: int) -> "PeriodicSamples":
        """Circular shift by whole nodes: ``g(theta + steps/N)``."""
        return PeriodicSamples(np.roll(self.values, -steps, axis=0))

    def resample(self, M: int, shift: float = 0.0) -> np.ndarray:
        """Values of the interpolant at ``shift + j/M``, ``j = 0..M-1``.

        Exact zero-padding in Fourier space; requires ``M >= N`` (and
        ``M > N`` when ``shift`` is nonzero, so the Nyquist term can be
        represented after the shift).
        """
        N = self.N
        if M < N or (M == N and shift != 0.0):
            raise InvalidInputError("resample needs M > N (or M == N without shift)")
        if M == N:
            return self.values.copy()
        c = self._rfft
        k = np.arange(N // 2 + 1)
        phase = np.exp(2j * np.pi * k * shift)[:, None]
        Y = np.zeros((M // 2 + 1, self.n), dtype=complex)
        Y[: N // 2] = c[: N // 2] * phase[: N // 2]
        # the cosine Nyquist term splits evenly between +N/2 and -N/2
        Y[N // 2] = 0.5 * c[N // 2] * phase[N // 2]
        return np.fft.irfft(Y * M, n=M, axis=0)

    # serialization -------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta"] + [f"x{i + 1}" for i in range(self.n)])
        for th, row in zip(self.nodes, self.values):
            w.writerow([repr(float(th))] + [repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PeriodicSamples":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][0] != "theta":
            raise InvalidInputError("orbit CSV must start with a 'theta' header")
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        N = data.shape[0]
        if not np.allclose(data[:, 0], np.arange(N) / N, rtol=0, atol=1e-15):
            raise InvalidInputError("orbit CSV theta column is not the uniform grid")
        return cls(data[:, 1:])

    def to_json(self) -> list:
        return [[float(x) for x in row] for row in self.values]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[float]]) -> "PeriodicSamples":
        return cls(np.asarray(data, dtype=float))


def _check_compatible(a: PeriodicSamples, b: PeriodicSamples):
    if a.values.shape != b.values.shape:
        raise InvalidInputError(
            f"shape mismatch: {a.values.shape} vs {b.values.shape}"
        )


def trig_eval(g: PeriodicSamples, theta):
    """Evaluate the trigonometric interpolant of ``g`` at ``theta``.

    Returns shape ``theta.shape + (n,)``. Arguments are reduced mod 1.
    """
    th = np.asarray(theta, dtype=float)
    shape = th.shape
    th = np.mod(np.atleast_1d(th).ravel(), 1.0)
    N = g.N
    k = np.arange(N // 2 + 1)
    w = np.full(N // 2 + 1, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    coef = w[:, None] * g._rfft
    out = np.empty((th.size, g.n))
    chunk = max(1, 2_000_000 // k.size)
    for start in range(0, th.size, chunk):
        E = np.exp(2j * np.pi * np.outer(th[start : start + chunk], k))
        out[start : start + chunk] = (E @ coef).real
    return out.reshape(shape + (g.n,))


def _wavenumbers(N: int, order: int) -> np.ndarray:
    k = np.arange(N // 2 + 1, dtype=float)
    mult = (2j * np.pi * k) ** order
    if order % 2:
        mult[-1] = 0.0
    return mult


def spectral_derivative(g: PeriodicSamples, order: int = 1) -> PeriodicSamples:
    """Nodal values of the ``order``-th derivative of the interpolant."""
    if order < 0:
        raise InvalidInputError("order must be >= 0")
    if order == 0:
        return g
    mult = _wavenumbers(g.N, order)[:, None]
    return PeriodicSamples(np.fft.irfft(g._rfft * mult * g.N, n=g.N, axis=0))


def c0_norm(g) -> float:
    """Sup over nodes of the Euclidean norm."""
    v = g.values if isinstance(g, PeriodicSamples) else np.asarray(g)
    return float(np.max(np.linalg.norm(v.reshape(v.shape[0], -1), axis=1)))


def c0_distance(a, b) -> float:
    """``max(|omega_a - omega_b|, max_k |g_a(theta_k) - g_b(theta_k)|)``.

    ``a`` and ``b`` are ``(omega, PeriodicSamples)`` pairs.
    """
    wa, ga = a
    wb, gb = b
    _check_compatible(ga, gb)
    return max(abs(float(wa) - float(wb)), c0_norm(ga.values - gb.values))


# Gregory end corrections: coefficients of the k-th forward/backward differences
_GREGORY = (1 / 12, 1 / 24, 19 / 720, 3 / 160, 863 / 60480, 275 / 24192)


def quadrature_period(values, theta0: float, theta1: float) -> np.ndarray:
    """Integral over ``[theta0, theta1]`` from equispaced samples.

    ``values`` holds ``m + 1`` samples at ``theta0 + j (theta1-theta0)/m``
    (leading axis). Uses the trapezoid rule with Gregory end corrections
    up to sixth differences, so polynomials of degree <= 6 integrate
    exactly once ``m >= 12``; on shorter grids the correction order drops to
    fit. Over a full period of a smooth periodic integrand the result
    differs from :func:`periodic_trapezoid` only by the truncation error of
    the end corrections.
    """
    length = theta1 - theta0
    if length > 1.0 + 1e-12:
        raise InvalidInputError("quadrature interval longer than one period")
    y = np.asarray(values, dtype=float)
    m = y.shape[0] - 1
    if m < 1:
        raise InvalidInputError("need at least 2 samples")
    h = length / m
    total = h * (y.sum(axis=0) - 0.5 * (y[0] + y[-1]))
    # left and right differences must not overlap
    order = min(len(_GREGORY), m // 2)
    for k in range(1, order + 1):
        fwd = np.diff(y[: k + 1], n=k, axis=0)[0]
        bwd = np.diff(y[-k - 1:], n=k, axis=0)[-1]
        total = total - h * _GREGORY[k - 1] * (bwd + (-1) ** k * fwd)
    return total


def periodic_trapezoid(g) -> np.ndarray:
    """Integral over one period of a periodic integrand (node mean)."""
    v = g.values if isinstance(g, PeriodicSamples) else np.asarray(g, dtype=float)
    return v.mean(axis=0)


@dataclass(frozen=True)
class NormReport:
    """Surrogate C^{l+Lip} data: sup norms of derivatives and a Lipschitz
    estimate of the highest one. Diagnostics only, not certified bounds."""

    c0: float
    deriv_sup: list = field(default_factory=list)
    lip_est: float = 0.0

    @property
    def cl_norm(self) -> float:
        return max(self.deriv_sup + [self.lip_est])


def norm_report(g: PeriodicSamples, ell: int = 3, oversample: int = 8) -> NormReport:
    """Sup norms of ``g`` and its first ``ell`` derivatives.

    Sups are taken on the interpolant sampled ``oversample`` times more
    densely than the nodes; node-only sups miss peaks of high harmonics.
    """
    if ell < 0:
        raise InvalidInputError("ell must be >= 0")
    M = oversample * g.N
    sups = [c0_norm(g.resample(M))]
    top = g.resample(M)
    for order in range(1, ell + 1):
        top = spectral_derivative(g, order).resample(M)
        sups.append(c0_norm(top))
    diffs = np.roll(top, -1, axis=0) - top
    lip = float(np.max(np.linalg.norm(diffs, axis=1)) * M)
    return NormReport(c0=sups[0], deriv_sup=sups, lip_est=lip)
