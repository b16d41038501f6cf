"""Strict YAML run configuration.

Every section has a fixed key set; unknown keys, wrong types and invalid
values raise :class:`ConfigError` naming the offending field. Write floats
in exponent form with a decimal point (``1.0e-12``): YAML 1.1 reads
``1e-12`` as a string, which is accepted here but does not round-trip.
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .exceptions import ConfigError
from .gamma import OPERATORS, SolverConfig
from .models import CATALOG, ExpressionMap, build_model, default_guess, expression_model
from .perturbation import COUPLINGS, KINDS, PerturbationSpec

__all__ = ["RunConfig", "parse_config", "config_from_dict", "load_config", "emit_config", "DEFAULTS"]

_REQUIRED = object()

DEFAULTS = {
    "model": {
        "name": _REQUIRED,
        "params": {},
        "equations": None,
        "variables": None,
        "time_periodic": False,
        "forcing_period": None,
        "guess": None,
    },
    "perturbation": {
        "kind": "constant_delay",
        "coupling": "identity",
        "delay": {},
        "epsilon": 0.0,
        "gamma": [],
        "h_max": None,
        "ball": None,
    },
    "discretization": {"N": 128, "substeps": 8},
    "solver": {
        "operator": "gamma",
        "tol_fixed": 1.0e-12,
        "max_iters": 200,
        "tol_floquet": 1.0e-6,
        "tol_trunc": 1.0e-14,
        "trunc_factor": 1.0,
        "ell": 3,
        "seed_tol": 1.0e-10,
    },
    "validation": {"periods": 3, "step": None},
    "continuation": {"grid": [], "predictor": "polynomial", "branch_jump_max": None},
    "output": {"dir": "out", "prefix": "run"},
}

_DELAY_KEYS = {
    "constant_delay": {"r"},
    "state_dependent": {"r"},
    "distributed": {"atoms", "segments"},
    "small_delay": {"r"},
    "implicit_pairwise": {"c", "dim", "pairs"},
}


def _float(path, value, positive=False, nonneg=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {type(value).__name__}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite")
    if positive and not value > 0:
        raise ConfigError(f"{path}: must be positive")
    if nonneg and value < 0:
        raise ConfigError(f"{path}: must be nonnegative")
    return value


def _int(path, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}")
    return value


def _check_keys(path, data, allowed):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(map(str, unknown))}")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with all defaults filled in.

    ``data`` mirrors the YAML layout; builder methods turn it into library
    objects.
    """

    data: dict

    def section(self, name: str) -> dict:
        return self.data[name]

    @property
    def N(self) -> int:
        return self.data["discretization"]["N"]

    @property
    def has_perturbation(self) -> bool:
        return self.data["perturbation"] is not None

    def build_field(self):
        m = self.data["model"]
        if m["name"] == "expression":
            return expression_model(
                m["equations"], m["variables"], m["params"], m["time_periodic"], m["forcing_period"]
            )
        return build_model(m["name"], m["params"])

    def guess(self):
        m = self.data["model"]
        if m["guess"] is not None:
            return np.array(m["guess"]["x0"], dtype=float), float(m["guess"]["T"])
        return default_guess(m["name"])

    def build_spec(self, field) -> PerturbationSpec | None:
        p = self.data["perturbation"]
        if p is None:
            return None
        n = field.n
        gamma = tuple(p["gamma"])
        kind = p["kind"]
        if kind == "small_delay":
            coupling = COUPLINGS["identity"]
        else:
            coupling = _with_path("perturbation.coupling", _make_coupling, p["coupling"], n, len(gamma), p["epsilon"])
        d = dict(p["delay"])
        if kind == "state_dependent":
            d["r"] = _with_path("perturbation.delay.r", _make_scalar_fn, d["r"], n)
        if kind == "distributed":
            d["atoms"] = [tuple(a) for a in d.get("atoms", [])]
            d["segments"] = [tuple(s) for s in d.get("segments", [])]
        if kind == "implicit_pairwise":
            d["pairs"] = [tuple(pr) for pr in d["pairs"]]
        ball = p["ball"]
        return PerturbationSpec(
            kind=kind,
            coupling=coupling,
            delay=d,
            gamma=gamma,
            epsilon=p["epsilon"],
            g=field if kind == "small_delay" else None,
            h_max=math.inf if p["h_max"] is None else p["h_max"],
            ball=None if ball is None else (ball["rho"], ball["delta"]),
        )

    def solver_config(self, operator: str | None = None) -> SolverConfig:
        s = self.data["solver"]
        return SolverConfig(
            operator=operator or s["operator"],
            tol_fixed=s["tol_fixed"],
            max_iters=s["max_iters"],
            tol_floquet=s["tol_floquet"],
            tol_trunc=s["tol_trunc"],
            trunc_factor=s["trunc_factor"],
            ell=s["ell"],
        )

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def _with_path(path, build, *args):
    try:
        return build(*args)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _make_coupling(source, n, m, eps):
    if isinstance(source, str):
        return COUPLINGS[source]
    names = [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)] + [f"gamma{j + 1}" for j in range(m)] + ["eps"]
    emap = ExpressionMap(source, names)

    def coupling(x, y, gamma):
        inputs = {f"x{i + 1}": x[..., i] for i in range(n)}
        inputs.update({f"y{i + 1}": y[..., i] for i in range(n)})
        inputs.update({f"gamma{j + 1}": float(gamma[j]) for j in range(m)})
        inputs["eps"] = float(eps)
        return emap(**inputs)

    return coupling


def _make_scalar_fn(source, n):
    if not isinstance(source, str):
        val = float(source)
        return lambda x: np.full(np.shape(x)[:-1], val)
    emap = ExpressionMap([source], [f"x{i + 1}" for i in range(n)])
    return lambda x: emap(**{f"x{i + 1}": x[..., i] for i in range(n)})[..., 0]


def _validate_model(m):
    _check_keys("model", m, DEFAULTS["model"])
    out = dict(DEFAULTS["model"])
    out.update(m)
    name = out["name"]
    if name is _REQUIRED:
        raise ConfigError("model.name: required")
    if not isinstance(name, str):
        raise ConfigError("model.name: expected a string")
    params = out["params"] or {}
    if not isinstance(params, dict):
        raise ConfigError("model.params: expected a mapping")
    out["params"] = {str(k): _float(f"model.params.{k}", v) for k, v in params.items()}
    out["time_periodic"] = bool(out["time_periodic"])
    if name == "expression":
        eqs = out["equations"]
        if not isinstance(eqs, list) or not eqs or not all(isinstance(e, str) for e in eqs):
            raise ConfigError("model.equations: expected a non-empty list of expression strings")
        if out["variables"] is not None and (
            not isinstance(out["variables"], list) or not all(isinstance(v, str) for v in out["variables"])
        ):
            raise ConfigError("model.variables: expected a list of names")
        if out["time_periodic"]:
            out["forcing_period"] = _float("model.forcing_period", out["forcing_period"], positive=True)
        elif out["forcing_period"] is not None:
            raise ConfigError("model.forcing_period: only valid with time_periodic: true")
        if out["guess"] is None and not out["time_periodic"]:
            raise ConfigError("model.guess: required for expression models")
    else:
        if name not in CATALOG:
            raise ConfigError(f"model.name: unknown model {name!r} (known: {', '.join(sorted(CATALOG))})")
        for key in ("equations", "variables", "forcing_period"):
            if out[key] is not None:
                raise ConfigError(f"model.{key}: only valid for expression models")
        if out["time_periodic"]:
            raise ConfigError("model.time_periodic: only valid for expression models")
    g = out["guess"]
    if g is not None:
        _check_keys("model.guess", g, {"x0", "T"})
        if "x0" not in g or "T" not in g:
            raise ConfigError("model.guess: needs x0 and T")
        if not isinstance(g["x0"], list):
            raise ConfigError("model.guess.x0: expected a list")
        out["guess"] = {
            "x0": [_float(f"model.guess.x0[{i}]", v) for i, v in enumerate(g["x0"])],
            "T": _float("model.guess.T", g["T"], positive=True),
        }
    return out


def _validate_perturbation(p):
    if p is None:
        return None
    _check_keys("perturbation", p, DEFAULTS["perturbation"])
    out = copy.deepcopy(DEFAULTS["perturbation"])
    out.update(p)
    kind = out["kind"]
    if kind not in KINDS:
        raise ConfigError(f"perturbation.kind: must be one of {', '.join(KINDS)}")
    c = out["coupling"]
    if isinstance(c, str):
        if c not in COUPLINGS:
            raise ConfigError(f"perturbation.coupling: unknown builtin {c!r} (known: {', '.join(sorted(COUPLINGS))})")
    elif not (isinstance(c, list) and c and all(isinstance(e, str) for e in c)):
        raise ConfigError("perturbation.coupling: expected a builtin name or a list of expressions")
    out["epsilon"] = _float("perturbation.epsilon", out["epsilon"], nonneg=True)
    if not isinstance(out["gamma"], list):
        raise ConfigError("perturbation.gamma: expected a list")
    out["gamma"] = [_float(f"perturbation.gamma[{i}]", v) for i, v in enumerate(out["gamma"])]
    out["h_max"] = _float("perturbation.h_max", out["h_max"], positive=True, allow_none=True)
    if out["ball"] is not None:
        _check_keys("perturbation.ball", out["ball"], {"rho", "delta"})
        try:
            out["ball"] = {k: _float(f"perturbation.ball.{k}", out["ball"][k], positive=True) for k in ("rho", "delta")}
        except KeyError as exc:
            raise ConfigError(f"perturbation.ball: missing {exc.args[0]}") from None
    d = out["delay"] or {}
    _check_keys("perturbation.delay", d, _DELAY_KEYS[kind])
    d = dict(d)
    if kind in ("constant_delay", "small_delay"):
        if "r" not in d:
            raise ConfigError("perturbation.delay.r: required")
        d["r"] = _float("perturbation.delay.r", d["r"])
    elif kind == "state_dependent":
        if "r" not in d:
            raise ConfigError("perturbation.delay.r: required")
        if not isinstance(d["r"], str):
            d["r"] = _float("perturbation.delay.r", d["r"])
    elif kind == "distributed":
        atoms = d.get("atoms", [])
        segs = d.get("segments", [])
        if not isinstance(atoms, list) or not all(isinstance(a, list) and len(a) == 2 for a in atoms):
            raise ConfigError("perturbation.delay.atoms: expected a list of [weight, lag] pairs")
        if not isinstance(segs, list) or not all(isinstance(s, list) and len(s) == 3 for s in segs):
            raise ConfigError("perturbation.delay.segments: expected a list of [density, lag_start, lag_stop]")
        d["atoms"] = [[_float("perturbation.delay.atoms", x) for x in a] for a in atoms]
        d["segments"] = [[_float("perturbation.delay.segments", x) for x in s] for s in segs]
        if not d["atoms"] and not d["segments"]:
            raise ConfigError("perturbation.delay: a distributed delay needs atoms or segments")
    else:
        for key in ("c", "dim", "pairs"):
            if key not in d:
                raise ConfigError(f"perturbation.delay.{key}: required")
        d["c"] = _float("perturbation.delay.c", d["c"], positive=True)
        d["dim"] = _int("perturbation.delay.dim", d["dim"], minimum=1)
        if not isinstance(d["pairs"], list) or not all(isinstance(pr, list) and len(pr) == 2 for pr in d["pairs"]):
            raise ConfigError("perturbation.delay.pairs: expected a list of [i, j] pairs")
        d["pairs"] = [[_int("perturbation.delay.pairs", i, 0) for i in pr] for pr in d["pairs"]]
    out["delay"] = d
    return out


def _validate_simple(name, data, spec):
    data = data or {}
    _check_keys(name, data, DEFAULTS[name])
    out = dict(DEFAULTS[name])
    out.update(data)
    for key, check in spec.items():
        out[key] = check(f"{name}.{key}", out[key])
    return out


def _even_N(path, v):
    if isinstance(v, bool) or not isinstance(v, int) or v < 4 or v % 2:
        raise ConfigError(f"{path}: N must be even and ≥ 4, got {v!r}")
    return v


def _operator(path, v):
    if v not in OPERATORS:
        raise ConfigError(f"{path}: must be one of {', '.join(OPERATORS)}")
    return v


def _validate_continuation(c):
    out = _validate_simple(
        "continuation",
        c,
        {"branch_jump_max": lambda p, v: _float(p, v, positive=True, allow_none=True)},
    )
    if out["predictor"] not in ("polynomial", "secant", "previous", "none"):
        raise ConfigError("continuation.predictor: must be polynomial, secant, previous or none")
    grid = out["grid"] or []
    if not isinstance(grid, list):
        raise ConfigError("continuation.grid: expected a list")
    parsed = []
    for i, g in enumerate(grid):
        path = f"continuation.grid[{i}]"
        _check_keys(path, g, {"name", "start", "stop", "count"})
        for key in ("name", "start", "stop", "count"):
            if key not in g:
                raise ConfigError(f"{path}.{key}: required")
        parsed.append(
            {
                "name": _grid_name(f"{path}.name", g["name"]),
                "start": _float(f"{path}.start", g["start"]),
                "stop": _float(f"{path}.stop", g["stop"]),
                "count": _int(f"{path}.count", g["count"], minimum=1),
            }
        )
    out["grid"] = parsed
    return out


def _grid_name(path, v):
    if v == "epsilon" or (isinstance(v, str) and v.startswith("gamma") and v[5:].isdigit() and int(v[5:]) >= 1):
        return v
    raise ConfigError(f"{path}: must be 'epsilon' or 'gammaK' (K >= 1), got {v!r}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate YAML text.

    Raises
    ------
    ConfigError
        Syntax errors (with line and column) or schema violations.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None) or getattr(exc, "context_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "unknown position"
        problem = getattr(exc, "problem", None) or str(exc).splitlines()[0]
        raise ConfigError(f"parse error at {where}: {problem}") from None
    return config_from_dict({} if raw is None else raw)


def config_from_dict(raw: dict) -> RunConfig:
    """Validate an already-loaded mapping (same rules as :func:`parse_config`)."""
    _check_keys("config", raw, DEFAULTS)
    if "model" not in raw:
        raise ConfigError("model: required section")
    data = {
        "model": _validate_model(raw["model"]),
        "perturbation": _validate_perturbation(raw.get("perturbation")),
        "discretization": _validate_simple(
            "discretization",
            raw.get("discretization"),
            {"N": _even_N, "substeps": lambda p, v: _int(p, v, minimum=1)},
        ),
        "solver": _validate_simple(
            "solver",
            raw.get("solver"),
            {
                "operator": _operator,
                "tol_fixed": lambda p, v: _float(p, v, positive=True),
                "max_iters": lambda p, v: _int(p, v, minimum=1),
                "tol_floquet": lambda p, v: _float(p, v, positive=True),
                "tol_trunc": lambda p, v: _float(p, v, positive=True),
                "trunc_factor": lambda p, v: _float(p, v, positive=True),
                "ell": lambda p, v: _int(p, v, minimum=0),
                "seed_tol": lambda p, v: _float(p, v, positive=True),
            },
        ),
        "validation": _validate_simple(
            "validation",
            raw.get("validation"),
            {
                "periods": lambda p, v: _int(p, v, minimum=1),
                "step": lambda p, v: _float(p, v, positive=True, allow_none=True),
            },
        ),
        "continuation": _validate_continuation(raw.get("continuation")),
        "output": _validate_simple(
            "output",
            raw.get("output"),
            {"dir": _string, "prefix": _string},
        ),
    }
    cfg = RunConfig(data)
    # compile expressions now so errors surface at startup
    field = _prefixed("model.equations", cfg.build_field)
    if data["model"]["guess"] is not None and len(data["model"]["guess"]["x0"]) != field.n:
        raise ConfigError(f"model.guess.x0: expected {field.n} entries")
    _prefixed("perturbation", cfg.build_spec, field)
    return cfg


def _prefixed(path, build, *args):
    try:
        return build(*args)
    except ConfigError as exc:
        msg = str(exc)
        if msg.split(":", 1)[0].startswith(("model.", "perturbation.")):
            raise
        raise ConfigError(f"{path}: {msg}") from None


def _string(path, v):
    if not isinstance(v, str) or not v:
        raise ConfigError(f"{path}: expected a non-empty string")
    return v


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def emit_config(cfg: RunConfig) -> str:
    """YAML text of the normalized configuration (every key present)."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=False, allow_unicode=True)
