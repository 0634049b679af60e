"""Scenario files, result files and the ``edgeflow`` command line.

Exit codes: 0 success, 1 invalid input (parse, schema or validation
failure), 2 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .constraints import EdgeConstraint
from .errors import (
    EdgeflowError,
    GraphError,
    NoConvergence,
    ObjectiveError,
    ParseError,
    RankDeficient,
    SchemaError,
    Unbounded,
    ValidationFailed,
)
from .graph import build_graph
from .harness import (
    ExplicitInit,
    Scenario,
    Trajectory,
    UniformInit,
    run,
    validate_scenario,
)
from .integrate import METHODS, STOP_METRICS, IntegratorConfig, StopRule
from .objectives import REGISTRY, make_objective
from .reference import solve_reference

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec, "minItems": 1}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "n", "agents", "edges", "mode", "init", "integrator"],
    "properties": {
        "version": {"const": FORMAT_VERSION},
        "name": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "allow_objectives_in_edge_only": {"type": "boolean"},
        "agents": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "objective"],
                "properties": {
                    "id": {"type": "integer", "minimum": 1},
                    "objective": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["type"],
                        "properties": {
                            "type": {"enum": sorted(REGISTRY)},
                            "params": {"type": "object"},
                        },
                    },
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["i", "j", "A", "b"],
                "properties": {
                    "i": {"type": "integer"},
                    "j": {"type": "integer"},
                    "A": _mat,
                    "b": _vec,
                },
            },
        },
        "mode": {"enum": ["saddle_point", "edge_only"]},
        "init": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": ["explicit", "uniform"]},
                "x0": _vec,
                "lambda0": _vec,
                "low": _num,
                "high": _num,
                "seed": {"type": "integer", "minimum": 0},
            },
            "allOf": [
                {
                    "if": {"properties": {"type": {"const": "explicit"}}},
                    "then": {"required": ["x0"], "not": {"anyOf": [
                        {"required": ["low"]}, {"required": ["high"]}, {"required": ["seed"]}]}},
                },
                {
                    "if": {"properties": {"type": {"const": "uniform"}}},
                    "then": {"required": ["seed"], "not": {"anyOf": [
                        {"required": ["x0"]}, {"required": ["lambda0"]}]}},
                },
            ],
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "required": ["method", "t_end", "record_every"],
            "properties": {
                "method": {"enum": list(METHODS)},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "atol": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "minimum": 0},
                "record_every": {"type": "number", "exclusiveMinimum": 0},
                "max_step": {"type": "number", "exclusiveMinimum": 0},
                "stop_on": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["metric", "threshold"],
                    "properties": {
                        "metric": {"enum": list(STOP_METRICS)},
                        "threshold": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
    },
}


# scenario <-> dict

def scenario_from_dict(doc: dict) -> Scenario:
    """Build a :class:`Scenario` from a parsed scenario document (no validation checks)."""
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise SchemaError(exc.message, path) from None

    n = doc["n"]
    agents = sorted(doc["agents"], key=lambda a: a["id"])
    ids = [a["id"] for a in agents]
    if ids != list(range(1, len(agents) + 1)):
        raise SchemaError(f"agent ids must be 1..{len(agents)} with no gaps, got {ids}", "agents")
    m = len(agents)
    try:
        objectives = tuple(
            make_objective(a["objective"]["type"], a["objective"].get("params", {})) for a in agents
        )
        g = build_graph(m, [(e["i"], e["j"]) for e in doc["edges"]])
        constraints = tuple(
            EdgeConstraint(i=e["i"] - 1, j=e["j"] - 1, A=e["A"], b=e["b"]) for e in doc["edges"]
        )
    except (GraphError, ObjectiveError, KeyError, TypeError) as exc:
        raise SchemaError(str(exc), "agents/edges") from None
    except RankDeficient as exc:
        raise ValidationFailed("rank", str(exc)) from None
    except EdgeflowError as exc:
        raise ValidationFailed("consistency", str(exc)) from None

    init_doc = doc["init"]
    if init_doc["type"] == "explicit":
        init = ExplicitInit(x0=init_doc["x0"], lam0=init_doc.get("lambda0"))
    else:
        init = UniformInit(
            seed=init_doc["seed"], low=init_doc.get("low", -10.0), high=init_doc.get("high", 10.0)
        )

    integ = dict(doc["integrator"])
    stop = integ.pop("stop_on", None)
    try:
        config = IntegratorConfig(**integ, stop_on=StopRule(**stop) if stop else None)
    except ValueError as exc:
        raise SchemaError(str(exc), "integrator") from None

    return Scenario(
        n=n,
        graph=g,
        constraints=constraints,
        objectives=objectives,
        mode=doc["mode"],
        init=init,
        integrator=config,
        allow_objectives_in_edge_only=doc.get("allow_objectives_in_edge_only", False),
        name=doc.get("name", ""),
    )


def scenario_to_dict(sc: Scenario) -> dict:
    doc = {"version": FORMAT_VERSION}
    if sc.name:
        doc["name"] = sc.name
    doc["n"] = sc.n
    if sc.allow_objectives_in_edge_only:
        doc["allow_objectives_in_edge_only"] = True
    doc["agents"] = [
        {"id": k + 1, "objective": {"type": f.kind, "params": f.params()}}
        for k, f in enumerate(sc.objectives)
    ]
    doc["edges"] = [
        {"i": c.i + 1, "j": c.j + 1, "A": c.A.tolist(), "b": c.b.tolist()} for c in sc.constraints
    ]
    doc["mode"] = sc.mode
    if isinstance(sc.init, ExplicitInit):
        init = {"type": "explicit", "x0": sc.init.x0.tolist()}
        if sc.init.lam0 is not None:
            init["lambda0"] = sc.init.lam0.tolist()
    else:
        init = {"type": "uniform", "low": sc.init.low, "high": sc.init.high, "seed": sc.init.seed}
    doc["init"] = init
    cfg = sc.integrator
    integ = {
        "method": cfg.method,
        "dt": cfg.dt,
        "rtol": cfg.rtol,
        "atol": cfg.atol,
        "t_end": cfg.t_end,
        "record_every": cfg.record_every,
    }
    if cfg.max_step is not None:
        integ["max_step"] = cfg.max_step
    if cfg.stop_on is not None:
        integ["stop_on"] = {"metric": cfg.stop_on.metric, "threshold": cfg.stop_on.threshold}
    doc["integrator"] = integ
    return doc


def scenario_hash(sc: Scenario) -> str:
    blob = json.dumps(scenario_to_dict(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_scenario(path, validate: bool = True) -> Scenario:
    """Parse, schema-check and (optionally) validate a scenario file.

    Raises :class:`ParseError`, :class:`SchemaError` or
    :class:`ValidationFailed` naming the first failing check.
    """
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from None
    sc = scenario_from_dict(doc)
    if validate:
        bad = validate_scenario(sc).first_failure()
        if bad is not None:
            raise ValidationFailed(bad.name, bad.message)
    return sc


def dump_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


# trajectories

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def trajectory_header(m: int, n: int, with_w: bool) -> list[str]:
    cols = ["t"]
    cols += [f"x_{i}_{k}" for i in range(1, m + 1) for k in range(1, n + 1)]
    cols += [f"lambda_{i}_{k}" for i in range(1, m + 1) for k in range(1, n + 1)]
    cols.append("V")
    if with_w:
        cols.append("W")
    return cols


def write_trajectory_csv(traj: Trajectory, m: int, n: int, path) -> None:
    with_w = traj.W is not None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(m, n, with_w))
        for k in range(len(traj)):
            row = [traj.times[k], *traj.x[k], *traj.lam[k], traj.V[k]]
            if with_w:
                row.append(traj.W[k])
            w.writerow([_fmt(v) for v in row])


def read_trajectory_csv(path, n: int) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, data = rows[0], np.array(rows[1:], dtype=float).reshape(len(rows) - 1, len(rows[0]))
    with_w = header[-1] == "W"
    N = sum(1 for h in header if h.startswith("x_"))
    return Trajectory(
        times=data[:, 0],
        x=data[:, 1:1 + N],
        lam=data[:, 1 + N:1 + 2 * N],
        V=data[:, 1 + 2 * N],
        W=data[:, 2 + 2 * N] if with_w else None,
    )


# commands

def cmd_check(path) -> int:
    try:
        sc = load_scenario(path, validate=False)
    except ValidationFailed as exc:
        print(f"FAIL {exc}")
        return 1
    except (ParseError, SchemaError) as exc:
        print(f"FAIL load: {exc}")
        return 1
    report = validate_scenario(sc)
    for c in report.checks:
        line = f"{'PASS' if c.ok else 'FAIL'} {c.name}"
        if c.message:
            line += f": {c.message}"
        if c.evidence:
            line += "  " + " ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}"
                                    for k, v in c.evidence.items())
        print(line)
    for wmsg in report.warnings:
        print(f"WARN {wmsg}")
    return 0 if report.ok else 1


def cmd_run(path, out_dir, seed: int | None = None, t_end: float | None = None) -> int:
    try:
        sc = load_scenario(path)
    except (ParseError, SchemaError, ValidationFailed) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1
    if seed is not None:
        if not isinstance(sc.init, UniformInit):
            print("--seed needs a uniform init", file=sys.stderr)
            return 1
        sc = sc.replace(init=UniformInit(seed=seed, low=sc.init.low, high=sc.init.high))
    if t_end is not None:
        sc = sc.replace(integrator=dataclasses.replace(sc.integrator, t_end=t_end))
    try:
        traj, summary = run(sc)
    except ValidationFailed as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1
    except EdgeflowError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    try:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(traj, sc.m, sc.n, out / "trajectory.csv")
        doc = summary.to_dict()
        doc["scenario_hash"] = scenario_hash(sc)
        doc["tool_version"] = __version__
        (out / "summary.json").write_text(json.dumps(doc, indent=2) + "\n")
    except OSError as exc:
        print(f"cannot write results: {exc}", file=sys.stderr)
        return 2
    print(
        f"t_final={summary.t_final:g} final_V={summary.final_V:.3e}"
        + (f" final_W={summary.final_W:.3e}" if summary.final_W is not None else "")
        + f" locality_ok={summary.locality_ok}"
    )
    return 0


def cmd_reference(path, out_dir) -> int:
    try:
        sc = load_scenario(path)
    except (ParseError, SchemaError, ValidationFailed) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return 1
    try:
        ref = solve_reference(sc.system, sc.objectives)
    except Unbounded as exc:
        print(f"Unbounded: {exc}", file=sys.stderr)
        return 2
    except NoConvergence as exc:
        print(f"NoConvergence: {exc} (residual {exc.residual:.3e})", file=sys.stderr)
        return 2
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "reference.json").write_text(json.dumps({
            "x_star": ref.x_star.tolist(),
            "mu_star": ref.mu_star.tolist(),
            "kkt_residual": ref.kkt_residual,
            "objective_value": ref.objective_value,
        }, indent=2) + "\n")
    except OSError as exc:
        print(f"cannot write results: {exc}", file=sys.stderr)
        return 2
    print(f"kkt_residual={ref.kkt_residual:.3e} objective_value={ref.objective_value:.12g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="edgeflow", description="Distributed optimization under edge agreements")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="validate a scenario file")
    c.add_argument("file")

    r = sub.add_parser("run", help="simulate a scenario and write trajectory.csv and summary.json")
    r.add_argument("file")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=None, help="override the uniform-init seed")
    r.add_argument("--t-end", type=float, default=None, help="override the horizon")

    f = sub.add_parser("reference", help="solve centrally and write reference.json")
    f.add_argument("file")
    f.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        if args.command == "check":
            return cmd_check(args.file)
        if args.command == "run":
            return cmd_run(args.file, args.out, seed=args.seed, t_end=args.t_end)
        return cmd_reference(args.file, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
