"""Branches of periodic solutions over ``epsilon`` and ``gamma``.

Each grid point is re-solved from a predicted correction built from the
previous points; independent branches may run in parallel threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exceptions import BranchGapError, InvalidInputError, SolverError
from .gamma import SolveReport, SolverConfig, solve
from .periodic import PeriodicSamples, c0_norm

__all__ = [
    "BranchPoint",
    "SmoothnessTable",
    "sweep",
    "sweep_many",
    "smoothness_probe",
    "richardson_ratio",
    "max_threads",
]

THREADS_ENV = "ORBIT_PERSIST_THREADS"


@dataclass(frozen=True)
class BranchPoint:
    epsilon: float
    gamma: tuple
    omega: float
    K: PeriodicSamples
    report: SolveReport | None = None
    inserted: bool = False

    @property
    def params(self) -> np.ndarray:
        return np.array((self.epsilon,) + tuple(self.gamma), dtype=float)


def max_threads() -> int:
    """Thread cap from ``ORBIT_PERSIST_THREADS`` (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        val = int(raw)
    except ValueError:
        raise InvalidInputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if val < 1:
        raise InvalidInputError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return val


def _predict(history, p_next, degree: int):
    """Lagrange extrapolation of ``(omega_hat, K_hat)`` along the branch.

    The abscissa is the cumulative parameter distance, so mixed
    ``(epsilon, gamma)`` grids are handled; ``degree`` 1 is the secant.
    """
    if not history:
        return None
    pts = history[-(degree + 1):]
    if len(pts) == 1:
        return (pts[0][1], pts[0][2])
    s = [0.0]
    for a, b in zip(pts[:-1], pts[1:]):
        s.append(s[-1] + float(np.linalg.norm(b[0] - a[0])))
    s = np.array(s)
    if np.any(np.diff(s) == 0):
        return (pts[-1][1], pts[-1][2])
    x = s[-1] + float(np.linalg.norm(p_next - pts[-1][0]))
    weights = []
    for i in range(len(pts)):
        others = np.delete(s, i)
        weights.append(np.prod((x - others) / (s[i] - others)))
    w_hat = sum(c * pt[1] for c, pt in zip(weights, pts))
    K_hat = sum(c * pt[2].values for c, pt in zip(weights, pts))
    return (float(w_hat), PeriodicSamples(K_hat))


_PREDICTOR_DEGREE = {"previous": 0, "secant": 1, "polynomial": 3}


def sweep(
    seed,
    spec_template,
    grid,
    config: SolverConfig | None = None,
    fd=None,
    predictor: str = "polynomial",
    branch_jump_max: float = np.inf,
) -> list:
    """Solve along ``grid``, warm-starting each point from its predecessors.

    Parameters
    ----------
    seed : OrbitSeed
    spec_template : PerturbationSpec
        ``epsilon`` and ``gamma`` are replaced per grid point.
    grid : sequence of (epsilon, gamma)
    config : SolverConfig, optional
    fd : FloquetData, optional
    predictor : {"polynomial", "secant", "previous", "none"}
        How the initial guess is built from earlier points: cubic or linear
        extrapolation, the last correction as is, or a cold start.
    branch_jump_max : float
        Largest accepted C0 jump of ``K`` between consecutive points.

    Raises
    ------
    BranchGapError
        A point fails even after inserting the midpoint.
    SolverError
        The first point fails.
    """
    if predictor not in ("polynomial", "secant", "previous", "none"):
        raise InvalidInputError(f"unknown predictor {predictor!r}")
    config = config or SolverConfig()
    points = []
    history = []

    def attempt(eps, gamma, init):
        spec = spec_template.with_params(epsilon=eps, gamma=gamma)
        return solve(seed, spec, fd, config, init)

    def guess(p):
        if predictor == "none":
            return None
        return _predict(history, p, _PREDICTOR_DEGREE[predictor])

    def record(eps, gamma, rep, inserted=False):
        if points and c0_norm(rep.K.values - points[-1].K.values) > branch_jump_max:
            raise BranchGapError(f"branch jump above {branch_jump_max:g} at epsilon={eps:g}, gamma={gamma}")
        p = np.array((eps,) + tuple(gamma), dtype=float)
        history.append((p, rep.omega_hat, rep.K_hat))
        points.append(BranchPoint(float(eps), tuple(gamma), rep.omega, rep.K, rep, inserted))

    for idx, (eps, gamma) in enumerate(grid):
        gamma = tuple(float(g) for g in gamma)
        p = np.array((eps,) + gamma, dtype=float)
        try:
            rep = attempt(eps, gamma, guess(p))
        except SolverError as exc:
            if idx == 0:
                raise
            prev = points[-1]
            mid_eps = 0.5 * (prev.epsilon + eps)
            mid_gamma = tuple(0.5 * (a + b) for a, b in zip(prev.gamma, gamma))
            p_mid = np.array((mid_eps,) + mid_gamma)
            try:
                mid = attempt(mid_eps, mid_gamma, guess(p_mid))
                record(mid_eps, mid_gamma, mid, inserted=True)
                rep = attempt(eps, gamma, guess(p))
            except SolverError as exc2:
                raise BranchGapError(
                    f"branch gap at epsilon={eps:g}, gamma={gamma}: {exc2}", report=getattr(exc2, "report", None)
                ) from exc
        record(eps, gamma, rep)
    return points


def sweep_many(seed, spec_template, grids, config=None, fd=None, threads: int | None = None, **kw) -> list:
    """Run independent branches concurrently, results in input order."""
    threads = threads or max_threads()
    threads = max(1, min(threads, len(grids)))
    if threads == 1:
        return [sweep(seed, spec_template, g, config, fd, **kw) for g in grids]
    # warm the shared caches once so threads only read them
    seed.flow.node_matrices
    seed.DK0
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(sweep, seed, spec_template, g, config, fd, **kw) for g in grids]
        return [f.result() for f in futures]


@dataclass(frozen=True)
class SmoothnessTable:
    """Central divided differences along a branch.

    ``omega_diff[i]`` belongs to parameter ``params[i + 1]`` (interior
    points). ``rel_change`` compares step ``h`` with step ``2h`` where both
    exist; ``stabilized`` means every such change is within 10 %.
    """

    order: int
    params: np.ndarray
    step: float
    omega_diff: np.ndarray
    K_diff: np.ndarray
    rel_change: np.ndarray
    stabilized: bool


def _param_values(branch, param):
    if param == "epsilon":
        return np.array([b.epsilon for b in branch], dtype=float)
    return np.array([b.gamma[int(param)] for b in branch], dtype=float)


def _central(values, h, order, stride=1):
    v = np.asarray(values, dtype=float)
    s = stride
    if order == 1:
        return (v[2 * s:] - v[:-2 * s]) / (2 * s * h)
    return (v[2 * s:] - 2 * v[s:-s] + v[:-2 * s]) / (s * h) ** 2


def smoothness_probe(branch, order: int = 1, param="epsilon", rel_tol: float = 0.1) -> SmoothnessTable:
    """Divided differences of ``omega`` and nodal ``K`` along a uniform branch.

    Parameters
    ----------
    branch : list of BranchPoint
    order : {1, 2}
    param : "epsilon" or int
        Probe ``epsilon`` or ``gamma[param]``.

    Raises
    ------
    InvalidInputError
        Non-uniform parameter grid or too few points.
    """
    if order not in (1, 2):
        raise InvalidInputError("order must be 1 or 2")
    p = _param_values(branch, param)
    if p.size < 3:
        raise InvalidInputError("need at least 3 branch points")
    steps = np.diff(p)
    h = steps[0]
    if h == 0 or not np.allclose(steps, h, rtol=1e-9, atol=0):
        raise InvalidInputError("smoothness_probe needs a uniform, strictly monotone grid")
    omega = np.array([b.omega for b in branch])
    K = np.stack([b.K.values for b in branch])
    d_w = _central(omega, h, order)
    d_K = _central(K, h, order)
    if p.size >= 5:
        coarse = _central(omega, h, order, stride=2)
        fine = d_w[1:-1]
        denom = np.maximum(np.abs(fine), np.finfo(float).tiny)
        rel = np.where(np.abs(coarse - fine) == 0, 0.0, np.abs(coarse - fine) / denom)
        stabilized = bool(np.all(rel <= rel_tol))
    else:
        rel = np.array([])
        stabilized = False
    return SmoothnessTable(order, p, float(h), d_w, d_K, rel, stabilized)


def richardson_ratio(branch, param=0) -> float:
    """Error-ratio of the central first difference of ``omega`` at the grid centre.

    Needs a uniform grid with ``8k + 1`` points. With ``D(h)``
    the central difference at spacing ``h`` (the outermost points), returns
    ``(D(h) - D(h/2)) / (D(h/2) - D(h/4))``, which tends to 4 for a
    second-order error.
    """
    p = _param_values(branch, param)
    m = p.size
    if m < 9 or (m - 1) % 8:
        raise InvalidInputError("richardson_ratio needs 8k+1 points")
    steps = np.diff(p)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise InvalidInputError("richardson_ratio needs a uniform grid")
    omega = np.array([b.omega for b in branch])
    c = m // 2
    q = (m - 1) // 8
    hq = steps[0]

    def D(k):
        return (omega[c + k] - omega[c - k]) / (2 * k * hq)

    d1, d2, d4 = D(4 * q), D(2 * q), D(q)
    return float((d1 - d2) / (d2 - d4))
