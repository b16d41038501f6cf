"""The unperturbed periodic orbit and its linearized flow.

Conventions: the orbit is parameterized by ``theta in [0, 1)`` with
``K0(theta) = x(theta / omega0)``; for time-periodic fields the forcing time
is ``t = theta / omega0`` as well, so ``omega0`` is the forcing frequency.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import ConvergenceError, InvalidInputError, SingularJacobianError
from .integrate import rk4_solve
from .periodic import PeriodicSamples, c0_norm, spectral_derivative

__all__ = [
    "OrbitSeed",
    "LinearizedFlow",
    "fundamental_matrix",
    "find_periodic_orbit",
    "seed_residual",
    "polish_orbit",
]


class LinearizedFlow:
    """Discrete RK4 solution operator of ``omega0 v' = A(theta) v + b(theta)``.

    ``A(theta)`` is the Jacobian of the field along ``K0``. Each of the
    ``substeps * N`` fine steps is an affine map
    ``y -> S y + P0 beta(t) + Ph beta(t + h/2) + P1 beta(t + h)`` with
    ``beta = b / omega0``, which is exactly what classical RK4 does on a
    linear system. Fundamental matrices and particular solutions built from
    these maps are therefore mutually consistent to roundoff.

    Parameters
    ----------
    field : VectorField
    K0 : PeriodicSamples
    omega0 : float
    substeps : int
        Fine RK4 steps per node interval.
    theta_from : float
        Base point of the fundamental matrix.
    """

    def __init__(self, field, K0: PeriodicSamples, omega0: float, substeps: int = 8, theta_from: float = 0.0):
        if substeps < 1:
            raise InvalidInputError("substeps must be >= 1")
        self.N = K0.N
        self.n = K0.n
        self.omega0 = float(omega0)
        self.substeps = int(substeps)
        self.theta_from = float(theta_from)
        F = self.N * self.substeps
        self.fine_steps = F
        h = 1.0 / F
        self.h = h
        theta = self.theta_from + np.arange(2 * F + 1) / (2 * F)
        Kf = K0.resample(2 * F, shift=self.theta_from) if self.theta_from else K0.resample(2 * F)
        Kf = np.vstack([Kf, Kf[:1]])
        A = field.jacobian(Kf, theta / self.omega0) / self.omega0
        a0, ah, a1 = A[0:2 * F:2], A[1:2 * F:2], A[2:2 * F + 1:2]
        eye = np.broadcast_to(np.eye(self.n), a0.shape)
        Y1 = a0
        Y2 = ah + h / 2 * ah @ Y1
        Y3 = ah + h / 2 * ah @ Y2
        Y4 = a1 + h * a1 @ Y3
        self.S = eye + h / 6 * (Y1 + 2 * Y2 + 2 * Y3 + Y4)
        B02 = h / 2 * ah
        B03 = h / 2 * ah @ B02
        B04 = h * a1 @ B03
        self.P0 = h / 6 * (eye + 2 * B02 + 2 * B03 + B04)
        Bh3 = h / 2 * ah + eye
        Bh4 = h * a1 @ Bh3
        self.Ph = h / 6 * (2 * eye + 2 * Bh3 + Bh4)
        self.P1 = h / 6
        if not np.all(np.isfinite(self.S)):
            raise InvalidInputError("non-finite Jacobian along the orbit")

    @cached_property
    def node_matrices(self) -> np.ndarray:
        """``Phi(theta_from + k/N; theta_from)`` for ``k = 0..N`` (shape (N+1, n, n))."""
        m = self.substeps
        out = np.empty((self.N + 1, self.n, self.n))
        P = np.eye(self.n)
        out[0] = P
        for k in range(self.fine_steps):
            P = self.S[k] @ P
            if (k + 1) % m == 0:
                out[(k + 1) // m] = P
        return out

    @property
    def monodromy(self) -> np.ndarray:
        return self.node_matrices[-1]

    def propagate(self, b, u0=None) -> np.ndarray:
        """Nodal solution ``v(k/N)``, ``k = 0..N``, started from ``v(0) = u0``.

        Parameters
        ----------
        b : ndarray, shape (N, n) or (N, n, r), or PeriodicSamples
            Periodic forcing on the nodes; ``r`` independent columns are
            propagated together.
        u0 : ndarray, shape (n,) or (n, r), optional
        """
        if self.theta_from:
            raise InvalidInputError("forced propagation is only supported from theta = 0")
        vals = b.values if isinstance(b, PeriodicSamples) else np.asarray(b, dtype=float)
        squeeze = vals.ndim == 2
        if squeeze:
            vals = vals[:, :, None]
        N, n, r = vals.shape
        if N != self.N or n != self.n:
            raise InvalidInputError("forcing does not match the orbit grid")
        F = self.fine_steps
        beta = PeriodicSamples(vals.reshape(N, n * r)).resample(2 * F).reshape(2 * F, n, r)
        beta = np.concatenate([beta, beta[:1]], axis=0) / self.omega0
        c = (
            np.einsum("kij,kjr->kir", self.P0, beta[0:2 * F:2])
            + np.einsum("kij,kjr->kir", self.Ph, beta[1:2 * F:2])
            + self.P1 * beta[2:2 * F + 1:2]
        )
        y = np.zeros((n, r)) if u0 is None else np.array(u0, dtype=float).reshape(n, r)
        m = self.substeps
        out = np.empty((self.N + 1, n, r))
        out[0] = y
        S = self.S
        for k in range(F):
            y = S[k] @ y + c[k]
            if (k + 1) % m == 0:
                out[(k + 1) // m] = y
        return out[:, :, 0] if squeeze else out


@dataclass(frozen=True, eq=False)
class OrbitSeed:
    """Unperturbed periodic orbit ``(K0, omega0)`` of ``field``.

    ``floquet`` is filled in by :func:`orbit_persist.floquet.analyze` through
    :meth:`with_floquet`.
    """

    K0: PeriodicSamples
    omega0: float
    field: object
    substeps: int = 8
    floquet: object = None

    def __post_init__(self):
        if not self.omega0 > 0:
            raise InvalidInputError("omega0 must be positive")

    @property
    def time_periodic(self) -> bool:
        return bool(self.field.time_periodic)

    @cached_property
    def DK0(self) -> PeriodicSamples:
        return spectral_derivative(self.K0)

    @cached_property
    def flow(self) -> LinearizedFlow:
        return LinearizedFlow(self.field, self.K0, self.omega0, self.substeps)

    @property
    def residual(self) -> float:
        return seed_residual(self.field, self.K0, self.omega0)

    def with_floquet(self, fd) -> "OrbitSeed":
        new = dataclasses.replace(self, floquet=fd)
        # the linearized flow only depends on the orbit, keep it
        for name in ("flow", "DK0"):
            if name in self.__dict__:
                new.__dict__[name] = self.__dict__[name]
        return new


def seed_residual(field, K0: PeriodicSamples, omega0: float) -> float:
    """``max_k |omega0 DK0 - f(K0, theta_k / omega0)|``."""
    t = K0.nodes / omega0
    return c0_norm(omega0 * spectral_derivative(K0).values - field(K0.values, t))


def fundamental_matrix(field, seed: OrbitSeed, theta_from: float = 0.0) -> np.ndarray:
    """``Phi(theta_from + k/N; theta_from)`` on the node grid, ``k = 0..N``."""
    if theta_from == 0.0:
        return seed.flow.node_matrices
    return LinearizedFlow(field, seed.K0, seed.omega0, seed.substeps, theta_from).node_matrices


def _diff_matrix(N: int) -> np.ndarray:
    return spectral_derivative(PeriodicSamples(np.eye(N))).values


def polish_orbit(field, K0: PeriodicSamples, omega0: float, max_iter: int = 10):
    """Newton on the discretized invariance equation.

    Autonomous fields solve for ``(K0, omega0)`` with an integral phase
    condition against the input orbit; time-periodic fields keep
    ``omega0`` and solve for ``K0`` only.
    """
    N, n = K0.N, K0.n
    D = np.kron(_diff_matrix(N), np.eye(n))
    t = K0.nodes / omega0
    K = K0.values.copy()
    omega = float(omega0)
    ref_dk = spectral_derivative(K0).values.ravel() / N
    autonomous = not field.time_periodic
    best = (np.inf, K, omega)
    for _ in range(max_iter):
        DK = (D @ K.ravel())
        G = omega * DK - field(K, t).ravel()
        res = float(np.max(np.abs(G)))
        if res < best[0]:
            best = (res, K.copy(), omega)
        J = omega * D
        blocks = field.jacobian(K, t)
        for k in range(N):
            J[k * n:(k + 1) * n, k * n:(k + 1) * n] -= blocks[k]
        if autonomous:
            J = np.block([[J, DK[:, None]], [ref_dk[None, :], np.zeros((1, 1))]])
            rhs = np.concatenate([-G, [-(ref_dk @ (K.ravel() - K0.values.ravel()))]])
        else:
            rhs = -G
        try:
            delta = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            raise SingularJacobianError("singular Jacobian while polishing the orbit") from None
        K = K + delta[: N * n].reshape(N, n)
        if autonomous:
            omega += float(delta[-1])
        if np.max(np.abs(delta)) < 1e-15 * max(1.0, np.max(np.abs(K))):
            break
    G = omega * (D @ K.ravel()) - field(K, t).ravel()
    if float(np.max(np.abs(G))) < best[0]:
        best = (float(np.max(np.abs(G))), K, omega)
    return PeriodicSamples(best[1]), best[2]


def _flow_and_variational(field, x0, t0, T, steps):
    n = field.n

    def rhs(y, t):
        x = y[:n]
        P = y[n:].reshape(n, n)
        return np.concatenate([field(x, t), (field.jacobian(x, t) @ P).ravel()])

    y0 = np.concatenate([x0, np.eye(n).ravel()])
    traj = rk4_solve(rhs, y0, t0, t0 + T, steps)
    return traj


def find_periodic_orbit(
    field,
    guess_x0,
    guess_T: float,
    N: int = 128,
    substeps: int = 8,
    max_newton: int = 50,
    seed_tol: float = 1e-10,
    polish: bool = True,
) -> OrbitSeed:
    """Locate a periodic orbit by Newton shooting and sample it on ``N`` nodes.

    Autonomous fields solve for ``(x0, T)`` with the anchor hyperplane
    ``f(guess) . (x0 - guess) = 0``; time-periodic fields fix ``T`` to the
    forcing period and solve for ``x0``. The sampled orbit is then refined by
    :func:`polish_orbit` so the nodal invariance residual reaches roundoff.

    Raises
    ------
    ConvergenceError
        No convergence within ``max_newton`` steps or residual above
        ``seed_tol``.
    SingularJacobianError
        Shooting Jacobian numerically singular.
    """
    if not guess_T > 0:
        raise InvalidInputError("guess_T must be positive")
    if N < 4 or N % 2:
        raise InvalidInputError(f"N must be even and >= 4, got {N}")
    n = field.n
    g = np.array(guess_x0, dtype=float)
    if g.shape != (n,):
        raise InvalidInputError(f"guess_x0 must have length {n}")
    autonomous = not field.time_periodic
    if not autonomous:
        guess_T = field.forcing_period
    # polishing restores full accuracy, so shooting only needs to land close
    shoot_sub = 2 if polish else substeps
    steps = N * shoot_sub
    x0, T = g.copy(), float(guess_T)
    fg = field(g, 0.0)
    converged = False
    for _ in range(max_newton):
        traj = _flow_and_variational(field, x0, 0.0, T, steps)
        xT = traj.x[-1, :n]
        PhiT = traj.x[-1, n:].reshape(n, n)
        if autonomous:
            F = np.concatenate([xT - x0, [fg @ (x0 - g)]])
            J = np.zeros((n + 1, n + 1))
            J[:n, :n] = PhiT - np.eye(n)
            J[:n, n] = field(xT, T)
            J[n, :n] = fg
        else:
            F = xT - x0
            J = PhiT - np.eye(n)
        if np.linalg.cond(J) > 1e14:
            raise SingularJacobianError("shooting Jacobian is singular")
        delta = np.linalg.solve(J, -F)
        x0 = x0 + delta[:n]
        if autonomous:
            T = T + delta[n]
            if not T > 0:
                raise ConvergenceError("shooting produced a non-positive period")
        if np.max(np.abs(delta)) < 1e-12 * max(1.0, np.max(np.abs(x0)), T) and np.max(np.abs(F)) < 1e-8:
            converged = True
            break
    if not converged:
        raise ConvergenceError(f"shooting did not converge in {max_newton} Newton steps")
    traj = rk4_solve(lambda x, t: field(x, t), x0, 0.0, T, steps)
    K0 = PeriodicSamples(traj.x[:-1:shoot_sub])
    omega0 = 1.0 / T
    if polish:
        K0, omega0 = polish_orbit(field, K0, omega0)
    res = seed_residual(field, K0, omega0)
    if res > seed_tol:
        raise ConvergenceError(f"seed invariance residual {res:.3e} above tolerance {seed_tol:.1e}")
    if autonomous:
        speed = np.linalg.norm(spectral_derivative(K0).values, axis=1)
        if speed.min() <= 1e-10 * max(1.0, speed.max()):
            raise ConvergenceError("orbit parameterization is degenerate (DK0 vanishes)")
    return OrbitSeed(K0, omega0, field, substeps)
