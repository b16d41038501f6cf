"""Monodromy spectrum, nondegeneracy checks and the projections onto the
flow direction and its spectral complement."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import (
    H1ppViolation,
    H1Violation,
    HyperbolicityViolation,
    InvalidInputError,
)

__all__ = [
    "FloquetData",
    "HyperbolicSplit",
    "analyze",
    "analyze_monodromy",
    "solve_bordered",
    "hyperbolic_split",
]

AUTONOMOUS = "autonomous"
NON_AUTONOMOUS = "non_autonomous"


@dataclass(frozen=True)
class HyperbolicSplit:
    """Real invariant bases at ``theta = 0`` and per-period decay rates.

    ``mu_s``/``mu_u`` are ``None`` when the subspace is trivial.
    """

    stable_basis: np.ndarray
    unstable_basis: np.ndarray
    center_basis: np.ndarray
    proj_stable: np.ndarray
    proj_unstable: np.ndarray
    proj_center: np.ndarray
    mu_s: float | None
    mu_u: float | None

    @property
    def mu_min(self) -> float | None:
        rates = [m for m in (self.mu_s, self.mu_u) if m is not None]
        return min(rates) if rates else None


@dataclass(frozen=True)
class FloquetData:
    """Spectral data of the monodromy matrix.

    In non-autonomous mode there is no unit multiplier: the eigenvector
    fields are ``None``, ``proj_parallel`` is zero and ``proj_perp`` the
    identity.
    """

    mode: str
    omega0: float
    monodromy: np.ndarray
    multipliers: np.ndarray
    right_unit_eigvec: np.ndarray | None
    left_unit_eigvec: np.ndarray | None
    proj_parallel: np.ndarray
    proj_perp: np.ndarray
    M_const: float
    bordered_cond: float
    alignment_angle: float | None = None
    hyperbolic_split: HyperbolicSplit | None = None

    @property
    def n(self) -> int:
        return self.monodromy.shape[0]

    def to_json(self) -> dict:
        lam = sorted(self.multipliers, key=lambda z: (-abs(z), z.real, z.imag))
        out = {
            "mode": self.mode,
            "multipliers": [[float(z.real), float(z.imag)] for z in lam],
            "multiplier_moduli": [float(abs(z)) for z in lam],
            "M_const": float(self.M_const),
            "bordered_condition": float(self.bordered_cond),
        }
        if self.alignment_angle is not None:
            out["alignment_angle"] = float(self.alignment_angle)
        hs = self.hyperbolic_split
        if hs is not None:
            out["hyperbolic"] = {
                "dim_stable": int(hs.stable_basis.shape[1]),
                "dim_unstable": int(hs.unstable_basis.shape[1]),
                "mu_s": hs.mu_s,
                "mu_u": hs.mu_u,
            }
        return out


def _unit_index(lam, tol):
    near = np.flatnonzero(np.abs(lam - 1.0) < tol)
    return near


def _perp_basis(P):
    U, s, _ = np.linalg.svd(P)
    rank = int(np.sum(s > 1e-8 * max(1.0, s[0]))) if s.size else 0
    return U[:, :rank]


def analyze_monodromy(
    monodromy,
    dk0=None,
    omega0: float = 1.0,
    mode: str = AUTONOMOUS,
    tol_floquet: float = 1e-6,
    align_tol: float = 1e-6,
) -> FloquetData:
    """Floquet analysis of a bare monodromy matrix.

    Parameters
    ----------
    monodromy : ndarray, shape (n, n)
    dk0 : ndarray, shape (n,)
        Flow direction at ``theta = 0``; required in autonomous mode.
    omega0 : float
    mode : {"autonomous", "non_autonomous"}
    tol_floquet : float
        Distance to 1 below which a multiplier counts as the unit one.
    align_tol : float
        Largest accepted sine of the angle between the unit eigenvector and
        ``dk0``.

    Raises
    ------
    H1Violation
        Autonomous mode without exactly one multiplier near 1, or with its
        eigenvector not along ``dk0``.
    H1ppViolation
        Non-autonomous mode with a multiplier near 1.
    """
    M = np.array(monodromy, dtype=float)
    n = M.shape[0]
    if M.shape != (n, n) or not np.all(np.isfinite(M)):
        raise InvalidInputError("monodromy must be a finite square matrix")
    lam, V = np.linalg.eig(M)
    near = _unit_index(lam, tol_floquet)
    eye = np.eye(n)
    if mode == NON_AUTONOMOUS:
        if near.size:
            raise H1ppViolation(
                f"monodromy has a multiplier within {tol_floquet:g} of 1: {lam[near[0]]:.8g}"
            )
        A = eye - M
        inv_norm = np.linalg.norm(np.linalg.inv(A), 2)
        fd = FloquetData(
            mode=mode,
            omega0=float(omega0),
            monodromy=M,
            multipliers=lam,
            right_unit_eigvec=None,
            left_unit_eigvec=None,
            proj_parallel=np.zeros((n, n)),
            proj_perp=eye,
            M_const=float(inv_norm / omega0),
            bordered_cond=float(np.linalg.cond(A)),
        )
        return _attach_split(fd, tol_floquet)
    if mode != AUTONOMOUS:
        raise InvalidInputError(f"unknown Floquet mode {mode!r}")
    if dk0 is None:
        raise InvalidInputError("autonomous analysis needs the flow direction dk0")
    if near.size != 1:
        found = ", ".join(f"{z:.6g}" for z in lam)
        raise H1Violation(
            f"expected exactly one multiplier within {tol_floquet:g} of 1, found {near.size} (multipliers: {found})"
        )
    i = near[0]
    d = np.asarray(dk0, dtype=float)
    d_unit = d / np.linalg.norm(d)
    v = np.real(V[:, i])
    v = v / np.linalg.norm(v)
    if v @ d_unit < 0:
        v = -v
    angle = float(np.linalg.norm(v - (v @ d_unit) * d_unit))
    if angle > align_tol:
        raise H1Violation(f"unit eigenvector misaligned with the flow direction (sin angle {angle:.2e})")
    lamT, W = np.linalg.eig(M.T)
    w = np.real(W[:, np.argmin(np.abs(lamT - 1.0))])
    w = w / (w @ v)
    P_par = np.outer(v, w)
    P_perp = eye - P_par
    Q = _perp_basis(P_perp)
    A = eye - M
    if Q.shape[1]:
        restricted = Q.T @ A @ Q
        inv_norm = np.linalg.norm(np.linalg.inv(restricted), 2)
    else:
        inv_norm = 0.0
    M_const = inv_norm * np.linalg.norm(P_perp, 2) / omega0
    bordered = np.block([[A, v[:, None]], [w[None, :], np.zeros((1, 1))]])
    fd = FloquetData(
        mode=mode,
        omega0=float(omega0),
        monodromy=M,
        multipliers=lam,
        right_unit_eigvec=v,
        left_unit_eigvec=w,
        proj_parallel=P_par,
        proj_perp=P_perp,
        M_const=float(M_const),
        bordered_cond=float(np.linalg.cond(bordered)),
        alignment_angle=angle,
    )
    return _attach_split(fd, tol_floquet)


def _attach_split(fd: FloquetData, tol) -> FloquetData:
    try:
        hs = hyperbolic_split(fd, tol)
    except HyperbolicityViolation:
        return fd
    return dataclasses.replace(fd, hyperbolic_split=hs)


def analyze(seed, mode: str | None = None, tol_floquet: float = 1e-6, align_tol: float = 1e-6) -> FloquetData:
    """Floquet analysis of ``seed``'s monodromy ``Phi(1; 0)``.

    ``mode`` defaults to ``non_autonomous`` for time-periodic fields.
    """
    if mode is None:
        mode = NON_AUTONOMOUS if seed.time_periodic else AUTONOMOUS
    return analyze_monodromy(
        seed.flow.monodromy,
        seed.DK0.values[0],
        seed.omega0,
        mode=mode,
        tol_floquet=tol_floquet,
        align_tol=align_tol,
    )


def solve_bordered(fd: FloquetData, rhs) -> np.ndarray:
    """Solve ``(I - M) u = Pi_perp rhs`` with ``Pi_par u = 0``.

    In non-autonomous mode this is the plain solve with ``I - M``.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = fd.n
    A = np.eye(n) - fd.monodromy
    if fd.mode == NON_AUTONOMOUS:
        return np.linalg.solve(A, rhs)
    v, w = fd.right_unit_eigvec, fd.left_unit_eigvec
    bordered = np.block([[A, v[:, None]], [w[None, :], np.zeros((1, 1))]])
    b = np.concatenate([fd.proj_perp @ rhs, np.zeros((1,) + rhs.shape[1:])])
    try:
        sol = np.linalg.solve(bordered, b)
    except np.linalg.LinAlgError:
        raise H1Violation("bordered periodicity system is singular") from None
    return sol[:n]


def hyperbolic_split(fd: FloquetData, tol_floquet: float = 1e-6) -> HyperbolicSplit:
    """Stable/unstable invariant subspaces of the monodromy via real Schur.

    Raises
    ------
    HyperbolicityViolation
        A multiplier other than the unit one has modulus within
        ``tol_floquet`` of 1.
    """
    M = fd.monodromy
    n = fd.n
    lam = fd.multipliers
    mods = np.abs(lam)
    others = np.ones(n, dtype=bool)
    if fd.mode == AUTONOMOUS:
        others[np.argmin(np.abs(lam - 1.0))] = False
    bad = others & (np.abs(mods - 1.0) <= tol_floquet)
    if np.any(bad):
        raise HyperbolicityViolation(
            f"multiplier {lam[np.flatnonzero(bad)[0]]:.6g} lies on the unit circle"
        )
    stable = others & (mods < 1.0)
    unstable = others & (mods > 1.0)
    _, Zs, ds = scipy.linalg.schur(M, output="real", sort=lambda re, im: math.hypot(re, im) < 1.0 - tol_floquet)
    _, Zu, du = scipy.linalg.schur(M, output="real", sort=lambda re, im: math.hypot(re, im) > 1.0 + tol_floquet)
    Es = Zs[:, :ds]
    Eu = Zu[:, :du]
    if ds != stable.sum() or du != unstable.sum():
        raise HyperbolicityViolation("Schur reordering disagrees with the multiplier count")
    Ec = fd.right_unit_eigvec[:, None] if fd.mode == AUTONOMOUS else np.zeros((n, 0))
    T = np.hstack([Es, Eu, Ec])
    Tinv = np.linalg.inv(T)
    Ps = Es @ Tinv[:ds]
    Pu = Eu @ Tinv[ds:ds + du]
    Pc = Ec @ Tinv[ds + du:]
    mu_s = float(-math.log(mods[stable].max())) if ds else None
    mu_u = float(math.log(mods[unstable].min())) if du else None
    return HyperbolicSplit(Es, Eu, Ec, Ps, Pu, Pc, mu_s, mu_u)
