"""Vector fields, the builtin model catalog and a small expression language.

All callables here are vectorized over leading axes: a state array of shape
``(..., n)`` maps to ``(..., n)`` and Jacobians have shape ``(..., n, n)``.
"""
from __future__ import annotations

import ast
import math
from typing import Callable, Mapping, Sequence

import numpy as np

from .exceptions import ConfigError, InvalidInputError

__all__ = [
    "VectorField",
    "ExpressionMap",
    "fd_jacobian",
    "CATALOG",
    "build_model",
    "default_guess",
    "expression_model",
]


def fd_jacobian(func: Callable, x: np.ndarray, *args) -> np.ndarray:
    """Central-difference Jacobian of ``func`` at ``x`` (vectorized).

    Per-component step ``h_i = max(1e-6, 1e-6 |x_i|)``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    cols = []
    for i in range(n):
        h = np.maximum(1e-6, 1e-6 * np.abs(x[..., i]))
        xp = x.copy()
        xm = x.copy()
        xp[..., i] += h
        xm[..., i] -= h
        d = (np.asarray(func(xp, *args)) - np.asarray(func(xm, *args))) / (2 * h)[..., None]
        cols.append(d)
    return np.stack(cols, axis=-1)


class VectorField:
    """An ODE right-hand side ``x' = f(x)`` or ``x' = f(x, t)``.

    Parameters
    ----------
    n : int
        State dimension.
    f : callable
        ``f(x)`` for autonomous fields, ``f(x, t)`` when ``time_periodic``.
    jac : callable, optional
        Same signature as ``f``, returning ``(..., n, n)``. Central
        differences are used when omitted.
    time_periodic : bool
        Whether ``f`` depends periodically on ``t``.
    forcing_period : float, optional
        Required when ``time_periodic`` is set.
    name : str
    """

    def __init__(
        self,
        n: int,
        f: Callable,
        jac: Callable | None = None,
        time_periodic: bool = False,
        forcing_period: float | None = None,
        name: str = "custom",
    ):
        if n < 1:
            raise InvalidInputError("dimension must be positive")
        if time_periodic and not (forcing_period and forcing_period > 0):
            raise InvalidInputError("time-periodic fields must declare a positive forcing_period")
        self.n = int(n)
        self.f = f
        self.jac = jac
        self.time_periodic = bool(time_periodic)
        self.forcing_period = float(forcing_period) if forcing_period else None
        self.name = name

    def __repr__(self):
        return f"VectorField(name={self.name!r}, n={self.n}, time_periodic={self.time_periodic})"

    def __call__(self, x, t=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.f(x, t) if self.time_periodic else self.f(x)
        return np.asarray(out, dtype=float)

    def jacobian(self, x, t=0.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jac is None:
            return self.fd_jacobian(x, t)
        out = self.jac(x, t) if self.time_periodic else self.jac(x)
        return np.asarray(out, dtype=float)

    def fd_jacobian(self, x, t=0.0) -> np.ndarray:
        if self.time_periodic:
            return fd_jacobian(self.f, x, t)
        return fd_jacobian(self.f, x)


# builtin catalog -----------------------------------------------------------


def _hopf2d() -> VectorField:
    def f(x):
        a, b = x[..., 0], x[..., 1]
        r2 = a * a + b * b
        return np.stack([a - b - a * r2, a + b - b * r2], axis=-1)

    def jac(x):
        a, b = x[..., 0], x[..., 1]
        row1 = np.stack([1 - 3 * a * a - b * b, -1 - 2 * a * b], axis=-1)
        row2 = np.stack([1 - 2 * a * b, 1 - a * a - 3 * b * b], axis=-1)
        return np.stack([row1, row2], axis=-2)

    return VectorField(2, f, jac, name="hopf2d")


def _hopf3u() -> VectorField:
    # hopf2d with a decoupled unstable direction x3' = x3
    base = _hopf2d()

    def f(x):
        return np.concatenate([base.f(x[..., :2]), x[..., 2:3]], axis=-1)

    def jac(x):
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., :2, :2] = base.jac(x[..., :2])
        J[..., 2, 2] = 1.0
        return J

    return VectorField(3, f, jac, name="hopf3u")


def _vanderpol(mu: float = 1.0) -> VectorField:
    mu = float(mu)

    def f(x):
        a, b = x[..., 0], x[..., 1]
        return np.stack([b, mu * (1 - a * a) * b - a], axis=-1)

    def jac(x):
        a, b = x[..., 0], x[..., 1]
        zero = np.zeros_like(a)
        row1 = np.stack([zero, zero + 1.0], axis=-1)
        row2 = np.stack([-2 * mu * a * b - 1, mu * (1 - a * a)], axis=-1)
        return np.stack([row1, row2], axis=-2)

    return VectorField(2, f, jac, name="vanderpol")


def _forced_osc(c: float = 0.2, amplitude: float = 1.0) -> VectorField:
    c = float(c)
    amplitude = float(amplitude)

    def f(x, t):
        a, b = x[..., 0], x[..., 1]
        return np.stack([b, -a - c * b + amplitude * np.cos(t) + 0 * a], axis=-1)

    def jac(x, t):
        J = np.zeros(np.shape(x)[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -1.0
        J[..., 1, 1] = -c
        return J

    return VectorField(2, f, jac, time_periodic=True, forcing_period=2 * math.pi, name="forced_osc")


CATALOG: dict[str, Callable[..., VectorField]] = {
    "hopf2d": _hopf2d,
    "hopf3u": _hopf3u,
    "vanderpol": _vanderpol,
    "forced_osc": _forced_osc,
}

# (x0, T) starting points for shooting; forced_osc uses its forcing period
_GUESSES = {
    "hopf2d": ((1.1, 0.0), 6.0),
    "hopf3u": ((1.1, 0.0, 0.0), 6.0),
    "vanderpol": ((2.0, 0.0), 6.5),
    "forced_osc": ((0.0, 0.0), 2 * math.pi),
}


def default_guess(name: str):
    """Shooting guess ``(x0, T)`` for a catalog model."""
    if name not in _GUESSES:
        raise InvalidInputError(f"no default guess for model {name!r}")
    x0, T = _GUESSES[name]
    return np.array(x0, dtype=float), float(T)


def build_model(name: str, params: Mapping[str, float] | None = None) -> VectorField:
    if name not in CATALOG:
        raise ConfigError(f"model.name: unknown model {name!r} (known: {sorted(CATALOG)})")
    try:
        return CATALOG[name](**dict(params or {}))
    except TypeError as exc:
        raise ConfigError(f"model.params: {exc}") from None


# expressions ---------------------------------------------------------------

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "arctan": np.arctan,
    "abs": np.abs,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Constant,
    ast.Name,
    ast.Load,
    ast.Call,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


def _compile_expr(text: str, names: set):
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
    callees = {id(n.func) for n in ast.walk(tree) if isinstance(n, ast.Call)}
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ConfigError(f"expression {text!r}: {type(node).__name__} not allowed")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"expression {text!r}: only numeric constants allowed")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
                raise ConfigError(f"expression {text!r}: unsupported function call")
        if isinstance(node, ast.Name) and id(node) not in callees:
            if node.id not in names and node.id not in _CONSTS:
                raise ConfigError(f"expression {text!r}: unknown name {node.id!r}")
    return compile(tree, "<expr>", "eval")


class ExpressionMap:
    """Vector of arithmetic expressions over named scalar inputs.

    Only numbers, named inputs, ``+ - * / **`` and a fixed set of numpy
    functions are accepted, so configs cannot execute arbitrary code.
    """

    def __init__(self, exprs: Sequence[str], names: Sequence[str], consts: Mapping[str, float] | None = None):
        self.exprs = [str(e) for e in exprs]
        self.names = list(names)
        self.consts = {k: float(v) for k, v in (consts or {}).items()}
        allowed = set(self.names) | set(self.consts)
        self._code = [_compile_expr(e, allowed) for e in self.exprs]

    def __call__(self, **inputs) -> np.ndarray:
        env = dict(_FUNCS)
        env.update(_CONSTS)
        env.update(self.consts)
        env.update(inputs)
        shape = np.broadcast_shapes(*[np.shape(v) for v in inputs.values()]) if inputs else ()
        cols = []
        for code in self._code:
            val = eval(code, {"__builtins__": {}}, env)
            cols.append(np.broadcast_to(np.asarray(val, dtype=float), shape))
        return np.stack(cols, axis=-1)


def expression_model(
    equations: Sequence[str],
    variables: Sequence[str] | None = None,
    params: Mapping[str, float] | None = None,
    time_periodic: bool = False,
    forcing_period: float | None = None,
) -> VectorField:
    """Build a field from component-wise expressions.

    Variables default to ``x1..xn``; ``t`` is available when
    ``time_periodic`` is set. The Jacobian falls back to central differences.
    """
    n = len(equations)
    variables = list(variables) if variables else [f"x{i + 1}" for i in range(n)]
    if len(variables) != n:
        raise ConfigError("model.variables: need one variable per equation")
    names = variables + (["t"] if time_periodic else [])
    emap = ExpressionMap(equations, names, params)

    def unpack(x):
        return {v: x[..., i] for i, v in enumerate(variables)}

    if time_periodic:
        def f(x, t):
            return emap(t=np.asarray(t, dtype=float), **unpack(x))
    else:
        def f(x):
            return emap(**unpack(x))

    return VectorField(n, f, None, time_periodic=time_periodic, forcing_period=forcing_period, name="expression")
