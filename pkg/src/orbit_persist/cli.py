"""Command-line front end.

Every subcommand prints its JSON report on stdout. Failures print one line
``error: <code>: <message>`` on stderr and exit with 1 (usage or config),
2 (hypothesis violation) or 3 (solver failure).
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import math
import os
import sys

import numpy as np
import yaml

from . import __version__
from .config import DEFAULTS, config_from_dict, emit_config, parse_config
from .continuation import max_threads, sweep_many
from .exceptions import ConfigError, InvalidInputError, OrbitPersistError, UnsupportedValidationError
from .floquet import AUTONOMOUS, NON_AUTONOMOUS, analyze
from .gamma import OPERATORS, invariance_residual, solve
from .orbit import OrbitSeed, find_periodic_orbit
from .periodic import PeriodicSamples
from .validation import method_of_steps

SCHEMA = 1


class UsageError(InvalidInputError):
    code = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def jsonable(obj):
    """Plain JSON types; non-finite floats become ``null``."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# -- configuration ---------------------------------------------------------


def _raw_config(args) -> dict:
    path = getattr(args, "config", None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        # syntax errors are reported with positions by the strict parser
        parse_config(text)
        raw = yaml.safe_load(text) or {}
    else:
        raw = {}
    raw = copy.deepcopy(raw)
    model = getattr(args, "model", None)
    if model is not None:
        if raw.get("model", {}).get("name") not in (None, model):
            raw["model"] = {}
        raw.setdefault("model", {})["name"] = model
    if "model" not in raw:
        raise UsageError("give --model or a config file")
    if getattr(args, "N", None) is not None:
        raw.setdefault("discretization", {})["N"] = args.N
    if getattr(args, "tol", None) is not None:
        raw.setdefault("solver", {})["tol_fixed"] = args.tol
    if getattr(args, "max_iters", None) is not None:
        raw.setdefault("solver", {})["max_iters"] = args.max_iters
    if getattr(args, "operator", None) is not None:
        raw.setdefault("solver", {})["operator"] = args.operator
    if getattr(args, "epsilon", None) is not None:
        if raw.get("perturbation") is None:
            if args.epsilon != 0.0:
                raise UsageError("--epsilon needs a perturbation section in the config")
        else:
            raw["perturbation"]["epsilon"] = args.epsilon
    return raw


def _seed(cfg):
    field = cfg.build_field()
    x0, T = cfg.guess()
    disc = cfg.section("discretization")
    seed = find_periodic_orbit(
        field, x0, T, N=disc["N"], substeps=disc["substeps"], seed_tol=cfg.section("solver")["seed_tol"]
    )
    return field, seed


def _floquet(cfg, seed, mode=None):
    fd = analyze(seed, mode=mode, tol_floquet=cfg.section("solver")["tol_floquet"])
    return seed.with_floquet(fd), fd


def _verdict(fd) -> dict:
    hyp = "H1" if fd.mode == AUTONOMOUS else "H1pp"
    out = {"hypothesis": hyp, "holds": True}
    out["hyperbolic"] = fd.hyperbolic_split is not None
    return out


def _solve_payload(cfg, rep, fd, orbit_csv=None) -> dict:
    p = cfg.section("perturbation")
    return {
        "schema": SCHEMA,
        "command": "solve",
        "version": __version__,
        "config": cfg.to_dict(),
        "gamma": [] if p is None else list(p["gamma"]),
        "report": rep.to_json(),
        "floquet": fd.to_json(),
        "orbit": rep.K.to_json(),
        "orbit_csv": orbit_csv,
    }


def _out_prefix(args, cfg) -> str:
    if getattr(args, "out", None):
        return args.out
    o = cfg.section("output")
    return os.path.join(o["dir"], o["prefix"])


# -- subcommands -----------------------------------------------------------


def cmd_orbit0(args) -> int:
    cfg = config_from_dict(_raw_config(args))
    field, seed = _seed(cfg)
    payload = {
        "schema": SCHEMA,
        "command": "orbit0",
        "model": cfg.section("model")["name"],
        "N": seed.K0.N,
        "omega0": seed.omega0,
        "period": 1.0 / seed.omega0,
        "seed_residual": seed.residual,
        "x0": seed.K0.values[0],
        "orbit": seed.K0.to_json(),
    }
    text = dump_json(payload)
    if args.out:
        _write(args.out + ".json", text)
        _write(args.out + ".csv", seed.K0.to_csv())
    sys.stdout.write(text)
    return 0


def cmd_floquet(args) -> int:
    cfg = config_from_dict(_raw_config(args))
    field, seed = _seed(cfg)
    _, fd = _floquet(cfg, seed, args.mode)
    payload = {"schema": SCHEMA, "command": "floquet", "model": cfg.section("model")["name"], "omega0": seed.omega0}
    payload.update(fd.to_json())
    payload["verdict"] = _verdict(fd)
    text = dump_json(payload)
    if args.out:
        _write(args.out + ".json", text)
    sys.stdout.write(text)
    return 0


def cmd_solve(args) -> int:
    cfg = config_from_dict(_raw_config(args))
    field, seed = _seed(cfg)
    seed, fd = _floquet(cfg, seed)
    spec = cfg.build_spec(field)
    rep = solve(seed, spec, fd, cfg.solver_config())
    prefix = _out_prefix(args, cfg)
    csv_name = os.path.basename(prefix) + ".csv"
    text = dump_json(_solve_payload(cfg, rep, fd, csv_name))
    _write(prefix + ".json", text)
    _write(prefix + ".csv", rep.K.to_csv())
    sys.stdout.write(text)
    return 0


def parse_grid(text: str) -> tuple:
    """``name=start:stop:count`` into ``(name, start, stop, count)``."""
    try:
        name, rng = text.split("=", 1)
        start, stop, count = rng.split(":")
        return name.strip(), float(start), float(stop), int(count)
    except ValueError:
        raise UsageError(f"--grid expects name=start:stop:count, got {text!r}") from None


def _grid_values(g) -> np.ndarray:
    if g["count"] == 1:
        return np.array([g["start"]])
    return np.linspace(g["start"], g["stop"], g["count"])


def cmd_continue(args) -> int:
    raw = _raw_config(args)
    if args.grid:
        grid = []
        for item in args.grid:
            name, start, stop, count = parse_grid(item)
            grid.append({"name": name, "start": start, "stop": stop, "count": count})
        raw.setdefault("continuation", {})["grid"] = grid
    if args.predictor is not None:
        raw.setdefault("continuation", {})["predictor"] = args.predictor
    cfg = config_from_dict(raw)
    cont = cfg.section("continuation")
    p = cfg.section("perturbation")
    if p is None:
        raise ConfigError("perturbation: continuation needs a perturbation section")
    if not cont["grid"]:
        raise ConfigError("continuation.grid: give at least one --grid or a grid in the config")
    names = [g["name"] for g in cont["grid"]]
    if len(set(names)) != len(names):
        raise ConfigError("continuation.grid: parameter listed twice")
    for nm in names:
        if nm != "epsilon" and int(nm[5:]) > len(p["gamma"]):
            raise ConfigError(f"continuation.grid: {nm} exceeds the {len(p['gamma'])} gamma entries of the perturbation")
    values = [_grid_values(g) for g in cont["grid"]]

    def point(assign):
        eps = p["epsilon"]
        gamma = list(p["gamma"])
        for nm, v in assign.items():
            if nm == "epsilon":
                eps = float(v)
            else:
                gamma[int(nm[5:]) - 1] = float(v)
        return eps, tuple(gamma)

    # outer parameters label independent branches; the last one is swept
    branches = []
    for outer in itertools.product(*values[:-1]):
        base = dict(zip(names[:-1], outer))
        branches.append([point({**base, names[-1]: v}) for v in values[-1]])

    field, seed = _seed(cfg)
    seed, fd = _floquet(cfg, seed)
    spec = cfg.build_spec(field)
    jump = cont["branch_jump_max"]
    results = sweep_many(
        seed,
        spec,
        branches,
        cfg.solver_config(),
        fd,
        threads=max_threads(),
        predictor=cont["predictor"],
        branch_jump_max=math.inf if jump is None else jump,
    )
    prefix = _out_prefix(args, cfg)
    m = len(p["gamma"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epsilon"] + [f"gamma{j + 1}" for j in range(m)] + ["omega", "residual", "mu_hat", "iters"])
    files = []
    idx = 0
    for branch in results:
        for bp in branch:
            rep = bp.report
            name = f"{prefix}_point{idx:04d}"
            payload = _solve_payload(cfg, rep, fd, os.path.basename(name) + ".csv")
            payload["command"] = "continue"
            payload["config"]["perturbation"]["epsilon"] = bp.epsilon
            payload["config"]["perturbation"]["gamma"] = list(bp.gamma)
            payload["gamma"] = list(bp.gamma)
            payload["inserted"] = bp.inserted
            _write(name + ".json", dump_json(payload))
            _write(name + ".csv", rep.K.to_csv())
            files.append(os.path.basename(name) + ".json")
            w.writerow([repr(bp.epsilon)] + [repr(g) for g in bp.gamma] + [repr(bp.omega), repr(rep.residual), repr(rep.mu_hat), rep.iters])
            idx += 1
    _write(prefix + "_branch.csv", buf.getvalue())
    summary = {
        "schema": SCHEMA,
        "command": "continue",
        "branches": len(results),
        "points": idx,
        "branch_csv": os.path.basename(prefix) + "_branch.csv",
        "point_reports": files,
    }
    sys.stdout.write(dump_json(summary))
    return 0


def cmd_validate(args) -> int:
    try:
        with open(args.report, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {args.report}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.report} is not JSON: {exc.msg} at line {exc.lineno}") from None
    if not isinstance(data, dict) or data.get("schema") != SCHEMA or "config" not in data or "report" not in data:
        raise UsageError(f"{args.report} is not a schema-{SCHEMA} solve report")
    cfg = config_from_dict(data["config"])
    field = cfg.build_field()
    spec = cfg.build_spec(field)
    rep = data["report"]
    if spec is not None:
        spec = spec.with_params(epsilon=rep["epsilon"], gamma=data.get("gamma") or None)
    if args.orbit:
        try:
            with open(args.orbit, encoding="utf-8") as fh:
                K = PeriodicSamples.from_csv(fh.read())
        except OSError as exc:
            raise UsageError(f"cannot read {args.orbit}: {exc.strerror}") from None
    else:
        K = PeriodicSamples.from_json(data["orbit"])
    if K.n != field.n:
        raise InvalidInputError(f"orbit has {K.n} components, the model has {field.n}")
    omega = float(rep["omega"])
    residual = invariance_residual(OrbitSeed(K, omega, field), spec, K, omega)
    periods = args.periods or cfg.section("validation")["periods"]
    out = {
        "schema": SCHEMA,
        "command": "validate",
        "source": os.path.basename(args.report),
        "invariance_residual": residual,
        "residual_threshold": args.residual_threshold,
        "residual_flagged": residual > args.residual_threshold,
        "deviation_threshold": args.deviation_threshold,
    }
    try:
        vr = method_of_steps(field, spec, K, omega, periods=periods, step=cfg.section("validation")["step"])
    except UnsupportedValidationError as exc:
        out["time_domain"] = None
        out["time_domain_note"] = str(exc)
        out["deviation_flagged"] = None
    else:
        out["time_domain"] = vr.to_json()
        out["deviation_flagged"] = vr.max_deviation > args.deviation_threshold
    text = dump_json(out)
    if args.out:
        _write(args.out, text)
    sys.stdout.write(text)
    return 0


def cmd_emit_config(args) -> int:
    if args.config is None and args.model is None:
        raw = {"model": {"name": "hopf2d"}, "perturbation": copy.deepcopy(DEFAULTS["perturbation"])}
        raw["perturbation"]["delay"] = {"r": 1.0}
    else:
        raw = _raw_config(args)
    sys.stdout.write(emit_config(config_from_dict(raw)))
    return 0


# -- argument parsing ------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orbit-persist", description="Periodic orbits of perturbed delay equations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", "--perturbation", dest="config", metavar="FILE", help="YAML run configuration")
        p.add_argument("--model", help="catalog model name (overrides the config)")
        p.add_argument("--N", type=int, help="number of nodes")

    p = sub.add_parser("orbit0", help="unperturbed orbit by shooting")
    common(p)
    p.add_argument("--out", metavar="PREFIX", help="write PREFIX.json and PREFIX.csv")
    p.set_defaults(func=cmd_orbit0)

    p = sub.add_parser("floquet", help="monodromy multipliers and hypothesis check")
    common(p)
    p.add_argument("--mode", choices=(AUTONOMOUS, NON_AUTONOMOUS), help="default: from the model")
    p.add_argument("--out", metavar="PREFIX", help="write PREFIX.json")
    p.set_defaults(func=cmd_floquet)

    def solver_flags(p):
        p.add_argument("--epsilon", type=float)
        p.add_argument("--tol", type=float, help="fixed-point tolerance")
        p.add_argument("--max-iters", dest="max_iters", type=int)
        p.add_argument("--operator", choices=OPERATORS)
        p.add_argument("--out", metavar="PREFIX", help="output prefix (default: output.dir/output.prefix)")

    p = sub.add_parser("solve", help="perturbed periodic orbit")
    common(p)
    solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("continue", help="branch over epsilon and gamma")
    common(p)
    solver_flags(p)
    p.add_argument("--grid", action="append", metavar="NAME=START:STOP:COUNT", help="repeatable; the last one is swept")
    p.add_argument("--predictor", choices=("polynomial", "secant", "previous", "none"))
    p.set_defaults(func=cmd_continue)

    p = sub.add_parser("validate", help="re-check a solve report by time stepping")
    p.add_argument("report", help="JSON written by solve or continue")
    p.add_argument("--orbit", metavar="CSV", help="orbit to check instead of the one in the report")
    p.add_argument("--periods", type=int)
    p.add_argument("--residual-threshold", dest="residual_threshold", type=float, default=1e-8)
    p.add_argument("--deviation-threshold", dest="deviation_threshold", type=float, default=1e-6)
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("emit-config", help="print a normalized configuration")
    p.add_argument("--config", dest="config", metavar="FILE")
    p.add_argument("--model")
    p.set_defaults(func=cmd_emit_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand (orbit0, floquet, solve, continue, validate, emit-config)")
        return args.func(args)
    except OrbitPersistError as exc:
        msg = " ".join(str(exc).split())
        sys.stderr.write(f"error: {exc.code}: {msg}\n")
        return exc.exit_code
    except Exception as exc:  # keep the one-line contract for unexpected failures
        msg = " ".join(f"{type(exc).__name__}: {exc}".split())
        sys.stderr.write(f"error: internal: {msg}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
