"""Command-line front end: ``funnelctl run | check | list``.

Exit codes: 0 success, 2 funnel breach (step size collapsed at the guard),
3 invalid or infeasible config, 4 integration failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional, Sequence

import jsonschema

from . import scenarios as S
from .controllers import ControllerError, ControllerSpec
from .dae import DaeError
from .funnel import FunnelError, FunnelFunction, check_class
from .plants import PlantError
from .sim import GUARD_AT_START, INTEGRATION_FAILURE, MIN_STEP, write_csv

EXIT_OK, EXIT_BREACH, EXIT_CONFIG, EXIT_INTEGRATION, EXIT_IO = 0, 2, 3, 4, 5

_TERMINATION_CODES = {"Completed": EXIT_OK, MIN_STEP: EXIT_BREACH, GUARD_AT_START: EXIT_CONFIG,
                      INTEGRATION_FAILURE: EXIT_INTEGRATION}

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM}
_MAT = {"type": "array", "items": _VEC}

_FUNNEL = {
    "type": "object",
    "required": ["family"],
    "additionalProperties": False,
    "properties": {
        "family": {"enum": ["ConstantReciprocal", "ExpDecayReciprocal", "LinearRamp", "Custom"]},
        "a": _NUM, "b": _NUM, "c": _NUM, "eps": _NUM, "T": _NUM, "expr": {"type": "string"},
        "bounded": {"type": ["boolean", "null"]}, "liminf_positive": {"type": ["boolean", "null"]},
        "max_derivative_order": {"type": "integer", "minimum": 0},
    },
}


def _kind(kind: str, props: dict, required: Sequence[str]) -> dict:
    return {"type": "object", "additionalProperties": False, "required": ["kind", *required],
            "properties": {"kind": {"const": kind}, **props}}


_DISTURBANCE = {
    "type": "object", "additionalProperties": False, "required": ["kind"],
    "properties": {"kind": {"enum": ["none", "constant", "sine", "prototype"]},
                   "value": _NUM, "amp": _NUM, "freq": _NUM},
}

_SYSTEM = {"oneOf": [
    _kind("scalar", {"a": _NUM, "b": _NUM, "c": _NUM, "x0": _NUM, "disturbance": _DISTURBANCE},
          ["a", "b", "c", "x0"]),
    _kind("lti", {"A": _MAT, "B": _MAT, "C": _MAT, "x0": _VEC}, ["A", "B", "C", "x0"]),
    _kind("heat_modal", {"n_modes": {"type": "integer", "minimum": 1},
                         "z0": {"oneOf": [{"const": "zero"}, _VEC]}}, ["n_modes"]),
    _kind("robot", {"m1": _NUM, "m2": _NUM, "l1": _NUM, "l2": _NUM, "g": _NUM, "y0": _VEC, "v0": _VEC}, []),
    _kind("pure_feedback", {"r": {"type": "integer", "minimum": 1}, "sigma": _NUM, "x0": _VEC}, ["r", "x0"]),
    _kind("delay_scalar", {"a": _NUM, "b": _NUM, "c_d": _NUM, "h": _NUM, "y0": _NUM}, ["a", "b", "c_d", "h", "y0"]),
    _kind("dae_normal_form", {"r": {"type": "integer"}, "l": {"type": "integer"}, "m": {"type": "integer"},
                              "Gh": _MAT, "R1": {"type": "array", "items": _MAT},
                              "R2": {"type": "array", "items": _MAT}, "P1": _MAT, "P2": _MAT, "S1": _MAT,
                              "S2": _MAT, "Q": _MAT, "A31": _MAT, "Gt": _MAT, "yI0": _MAT, "x30": _VEC},
          ["r", "l", "m", "Gh"]),
]}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "funnelctl run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["system", "controller"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "system": _SYSTEM,
        "controller": {
            "type": "object", "additionalProperties": False, "required": ["variant"],
            "properties": {"variant": {"enum": list(ControllerSpec.VARIANTS)}, "params": {"type": "object"}},
        },
        "reference": {
            "type": "object", "additionalProperties": False, "required": ["kind"],
            "properties": {"kind": {"enum": ["sine", "zero"]}, "amp": _VEC, "freq": _VEC, "phase": _VEC,
                           "offset": _VEC, "m": {"type": "integer", "minimum": 1}},
        },
        "funnel": {"type": "object", "additionalProperties": _FUNNEL},
        "sim": {
            "type": "object", "additionalProperties": False,
            "properties": {"t_end": {"type": "number", "exclusiveMinimum": 0},
                           "rtol": {"type": "number", "exclusiveMinimum": 0},
                           "atol": {"type": "number", "exclusiveMinimum": 0},
                           "max_step": {"type": ["number", "null"], "exclusiveMinimum": 0},
                           "seed": {"type": "integer"}, "method": {"enum": ["rk45", "lsoda"]}},
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"csv_path": {"type": ["string", "null"]}, "report_path": {"type": ["string", "null"]}},
        },
    },
}


class CliConfigError(ValueError):
    pass


_CONFIG_ERRORS = (CliConfigError, S.ConfigError, ControllerError, FunnelError, PlantError, DaeError,
                  KeyError, TypeError, ValueError)


def _reject_constant(name: str):
    raise CliConfigError(f"non-finite number {name} in config")


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh, parse_constant=_reject_constant)
    validate_config(cfg)
    return cfg


def validate_config(cfg: Any) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise CliConfigError(f"config invalid at {where}: {exc.message}") from exc
    _check_finite(cfg)


def _check_finite(obj: Any, where: str = "") -> None:
    if isinstance(obj, float) and not math.isfinite(obj):
        raise CliConfigError(f"non-finite number at {where or '<root>'}")
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{where}/{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _check_finite(v, f"{where}/{i}")


def scenario_config(name: str) -> dict:
    """Built-in scenario config, overridden by ``$FUNNELCTL_SCENARIO_DIR/<name>.json`` if present."""
    override_dir = os.environ.get("FUNNELCTL_SCENARIO_DIR")
    if override_dir:
        path = Path(override_dir) / f"{name}.json"
        if path.is_file():
            return load_config(str(path))
    try:
        return S.get(name).to_config()
    except S.ConfigError as exc:
        raise CliConfigError(str(exc)) from exc


def _apply_overrides(cfg: dict, args) -> dict:
    sim = cfg.setdefault("sim", {})
    for key, val in (("rtol", args.rtol), ("atol", args.atol), ("t_end", args.t_end)):
        if val is not None:
            sim[key] = float(val)
    if args.seed is not None:
        sim["seed"] = int(args.seed)
    validate_config(cfg)
    return cfg


def _err(msg: str) -> None:
    print(f"funnelctl: {msg}", file=sys.stderr)


def run_one(cfg: dict, out: Optional[str], report: Optional[str], quiet: bool = False) -> int:
    try:
        traj, rep = S.run_config(cfg)
    except _CONFIG_ERRORS as exc:
        _err(f"invalid or infeasible config: {exc}")
        return EXIT_CONFIG
    except ArithmeticError as exc:
        _err(f"integration failure: {exc}")
        return EXIT_INTEGRATION
    code = _TERMINATION_CODES.get(rep.termination, EXIT_INTEGRATION)
    output = cfg.get("output", {})
    out = out or output.get("csv_path")
    report = report or output.get("report_path")
    try:
        if out:
            write_csv(traj, out)
        if report:
            text = json.dumps(rep.to_dict(), indent=2, default=float) if report.endswith(".json") else rep.to_text()
            Path(report).write_text(text, encoding="utf-8")
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO
    if not quiet and not report:
        sys.stdout.write(rep.to_text())
    if code == EXIT_BREACH:
        _err(f"funnel breach at t = {traj.t_fail}: {traj.message}")
    elif code != EXIT_OK:
        _err(f"{rep.termination}: {traj.message}")
    return code


def _run_named(args: tuple) -> tuple[str, int]:
    name, out_dir, overrides = args
    ns = argparse.Namespace(**overrides)
    try:
        cfg = _apply_overrides(scenario_config(name), ns)
    except _CONFIG_ERRORS as exc:
        _err(f"{name}: {exc}")
        return name, EXIT_CONFIG
    out = str(Path(out_dir) / f"{name}.csv") if out_dir else None
    rep = str(Path(out_dir) / f"{name}.report.txt") if out_dir else None
    return name, run_one(cfg, out, rep, quiet=True)


def cmd_run(args) -> int:
    if args.all:
        if args.out:
            try:
                Path(args.out).mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                _err(f"I/O error: {exc}")
                return EXIT_IO
        overrides = {"rtol": args.rtol, "atol": args.atol, "t_end": args.t_end, "seed": args.seed}
        jobs = [(n, args.out, overrides) for n in S.catalog()]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_named, jobs))
        for name, code in results:
            print(f"{name}: exit {code}")
        return max(code for _, code in results)
    try:
        cfg = _load_from_args(args)
        cfg = _apply_overrides(cfg, args)
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_IO
    except (_CONFIG_ERRORS + (json.JSONDecodeError,)) as exc:
        _err(f"invalid config: {exc}")
        return EXIT_CONFIG
    return run_one(cfg, args.out, args.report)


def _load_from_args(args) -> dict:
    if bool(args.scenario) == bool(args.config):
        raise CliConfigError("give exactly one of --scenario or --config")
    return scenario_config(args.scenario) if args.scenario else load_config(args.config)


def check_config(cfg: dict) -> list[str]:
    """Validate without integrating; returns report lines, raises on any violation."""
    lines = []
    horizon = float(S.sim_settings(cfg)["t_end"])
    c = cfg["controller"]
    for name, spec in cfg.get("funnel", {}).items():
        f = FunnelFunction.from_dict(spec)
        rep = check_class(f, 1, horizon)
        lines.append(f"funnel {name}: in_Phi={rep.in_Phi} c_estimate={rep.c_estimate:.6g}")
        if not rep.in_Phi:
            raise CliConfigError(f"funnel {name} is not in the admissible class on [0, {horizon:g}]")
    if c["variant"] == "SaturatedFC" and cfg["system"].get("kind") == "scalar":
        feas = S.saturated_feasibility(cfg)
        lines.append(f"feasibility: lhs={feas['lhs']:.17g} rhs={feas['rhs']:.17g} feasible={feas['feasible']}")
        if not feas["feasible"]:
            raise CliConfigError("saturation level violates the feasibility inequality")
    prob = S.build_problem(cfg)
    lines.append(f"assembled: state dimension {prob.n}, initial data admissible")
    return lines


def cmd_check(args) -> int:
    try:
        cfg = _apply_overrides(_load_from_args(args), args)
        for line in check_config(cfg):
            print(line)
    except OSError as exc:
        _err(f"cannot read config: {exc}")
        return EXIT_CONFIG
    except (_CONFIG_ERRORS + (json.JSONDecodeError,)) as exc:
        _err(f"check failed: {exc}")
        return EXIT_CONFIG
    print("ok")
    return EXIT_OK


def cmd_list(args=None) -> int:
    cat = S.catalog()
    width = max(len(n) for n in cat)
    for name, sc in cat.items():
        print(f"{name:<{width}}  [{S.TOPICS.get(name, '')}]  {sc.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="funnelctl", description="Funnel control simulations")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario")
        sp.add_argument("--config")
        sp.add_argument("--rtol", type=float)
        sp.add_argument("--atol", type=float)
        sp.add_argument("--t-end", type=float, dest="t_end")
        sp.add_argument("--seed", type=int)

    run = sub.add_parser("run", help="integrate a scenario or config")
    common(run)
    run.add_argument("--out", help="CSV path (directory with --all)")
    run.add_argument("--report", help="report path (.json for JSON, text otherwise)")
    run.add_argument("--all", action="store_true", help="run every catalog scenario concurrently")
    run.add_argument("--jobs", type=int, default=None)
    run.set_defaults(func=cmd_run)

    chk = sub.add_parser("check", help="validate a config without integrating")
    common(chk)
    chk.set_defaults(func=cmd_check)

    lst = sub.add_parser("list", help="print the scenario catalog")
    lst.set_defaults(func=cmd_list)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return int(args.func(args))


if __name__ == "__main__":
    sys.exit(main())
