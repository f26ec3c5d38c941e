"""
Command-line entry points.

Subcommands ``run-sqg``, ``pod-extract``, ``transport`` and ``verify``.
Exit codes: 0 success, 1 verification failure, 2 usage or configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np
import scipy.fft

from . import forms as fm
from . import transport as tr
from . import verify
from .forms import DifferentialForm, VectorFieldOnGrid
from .grid import PeriodicGrid, SpectralInterpolator
from .noise import sample_increments, write_path_csv
from .pod import compute_pod, read_snapshot_dir, write_basis
from .sqg import SCHEMES, NumericalBlowup, modes_field, run, write_run_outputs

log = logging.getLogger("stochgfd")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3

_num = {"type": "number"}
_int_list = {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2, "maxItems": 3}
_num_list = {"type": "array", "items": _num, "minItems": 2, "maxItems": 3}
_mode = {
    "type": "object",
    "properties": {"k": {"type": "array", "items": _num}, "amplitude": _num, "phase": _num,
                   "kind": {"enum": ["sin", "cos"]}},
    "required": ["k"],
    "additionalProperties": False,
}
_modes = {"type": "array", "items": _mode}
_grid = {
    "type": "object",
    "properties": {"n": _int_list, "length": _num_list},
    "required": ["n"],
    "additionalProperties": False,
}
_common = {"seed": {"type": "integer", "minimum": 0}, "log_level": {"enum": ["DEBUG", "INFO", "WARNING", "ERROR"]},
           "out": {"type": "string"}}

SQG_SCHEMA = {
    "type": "object",
    "properties": {
        "grid": _grid,
        "params": {
            "type": "object",
            "properties": {
                "F": {"type": "number", "minimum": 0}, "beta": _num, "f0": _num,
                "filter": {"type": "object",
                           "properties": {"nu": {"type": "number", "minimum": 0}, "order": {"type": "integer", "minimum": 1}},
                           "additionalProperties": False},
            },
            "additionalProperties": False,
        },
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "steps": {"type": "integer", "minimum": 0},
        "scheme": {"enum": list(SCHEMES)},
        "noise": {
            "type": "object",
            "properties": {"modes": _modes, "K": {"type": "integer", "minimum": 0}, "pod_basis": {"type": "string"},
                           "scale": _num},
            "additionalProperties": False,
        },
        "initial": {"type": "object", "properties": {"modes": _modes}, "additionalProperties": False},
        "snapshot_every": {"type": "integer", "minimum": 0},
        "diagnostic_every": {"type": "integer", "minimum": 0},
        **_common,
    },
    "required": ["grid", "dt", "steps"],
    "additionalProperties": False,
}

_field = {
    "type": "object",
    "properties": {
        "constant": {"type": "array", "items": _num},
        "streamfunction": _modes,
        "components": {"type": "array", "items": _modes},
    },
    "minProperties": 1,
    "maxProperties": 1,
    "additionalProperties": False,
}

TRANSPORT_SCHEMA = {
    "type": "object",
    "properties": {
        "grid": _grid,
        "T": {"type": "number", "minimum": 0},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "interpretation": {"enum": list(tr.INTERPRETATIONS)},
        "incompressible": {"type": "boolean"},
        "form": {
            "type": "object",
            "properties": {"grade": {"enum": list(fm.GRADES)}, "components": {"type": "array", "items": _modes}},
            "required": ["grade", "components"],
            "additionalProperties": False,
        },
        "drift": _field,
        "noise": {"type": "array", "items": _field},
        "loop": {
            "type": "object",
            "properties": {"center": _num_list, "radius": {"type": "number", "exclusiveMinimum": 0},
                           "P": {"type": "integer", "minimum": 8}, "normal": _num_list},
            "required": ["center", "radius"],
            "additionalProperties": False,
        },
        "record_every": {"type": "integer", "minimum": 1},
        **_common,
    },
    "required": ["grid", "T", "dt", "form"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    pass


def load_config(path, schema: dict) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(config, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    return config


def _grid_from(cfg: dict) -> PeriodicGrid:
    return PeriodicGrid(tuple(cfg["n"]), tuple(cfg.get("length", ())))


def _out_dir(args, config: dict | None = None) -> Path:
    out = args.out or (config or {}).get("out") or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- run-sqg -------------------------------------------------------------------

def cmd_run_sqg(args) -> int:
    config = load_config(args.config, SQG_SCHEMA)
    if args.seed is not None:
        config["seed"] = args.seed
    out = _out_dir(args, config)
    try:
        result = run(config)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    written = write_run_outputs(out, result)
    if result.path is not None:
        write_path_csv(out / "brownian_path.csv", result.path)
    log.info("wrote %d files to %s", len(written), out)
    return EXIT_OK


# -- pod-extract -----------------------------------------------------------------

def cmd_pod(args) -> int:
    if args.snapshots is None or args.K is None:
        raise ConfigError("pod-extract needs --snapshots DIR and --K N")
    try:
        data = read_snapshot_dir(args.snapshots)
        basis = compute_pod(data, args.K, center=args.center, leray=args.leray)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    out = _out_dir(args)
    write_basis(out, basis)
    if basis.degenerate:
        log.warning("eigenvalue gap is degenerate at K=%d; modes are not unique", args.K)
    log.info("POD eigenvalues: %s", ", ".join(f"{v:.6g}" for v in basis.eigenvalues))
    return EXIT_OK


# -- transport -----------------------------------------------------------------

def _vector_field(g: PeriodicGrid, spec: dict, incompressible: bool) -> VectorFieldOnGrid:
    if "constant" in spec:
        if len(spec["constant"]) != g.dims:
            raise ConfigError("constant vector has the wrong dimension")
        return VectorFieldOnGrid.constant(g, spec["constant"])
    if "streamfunction" in spec:
        if g.dims != 2:
            raise ConfigError("stream functions define 2D flows only")
        return VectorFieldOnGrid.from_streamfunction(modes_field(g, spec["streamfunction"]))
    comps = spec["components"]
    if len(comps) != g.dims:
        raise ConfigError(f"expected {g.dims} velocity components")
    return VectorFieldOnGrid(np.stack([modes_field(g, c).values for c in comps]), incompressible, g)


def build_transport(config: dict) -> tuple[DifferentialForm, tr.FlowSpec]:
    g = _grid_from(config["grid"])
    inc = bool(config.get("incompressible", False))
    f = config["form"]
    try:
        q0 = DifferentialForm(f["grade"], np.stack([modes_field(g, c).values for c in f["components"]]), g)
        drift = _vector_field(g, config["drift"], inc) if "drift" in config else None
        noise = [_vector_field(g, s, inc) for s in config.get("noise", [])]
        flow = tr.FlowSpec(drift, noise, config.get("interpretation", tr.STRATONOVICH), inc, g)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return q0, flow


def transport_report(config: dict) -> tuple[list[dict], dict]:
    """Advect the configured form and summarise how far it moved.

    For rigid (constant) flows the final state is also compared with the
    exact translate of the initial form, evaluated by direct interpolation.
    """
    q0, flow = build_transport(config)
    g = q0.grid
    T, dt = float(config["T"]), float(config["dt"])
    steps = int(round(T / dt))
    path = sample_increments(int(config.get("seed", 0)), flow.K, dt, max(steps, 1)) if flow.K else None
    every = int(config.get("record_every", 1))
    traj = tr.advect_form(q0, flow, path, T, dt, record_every=every)
    norm0 = q0.norm()
    rows = []
    for t, q in zip(traj.times, traj.forms):
        if not np.all(np.isfinite(q.data)):
            raise NumericalBlowup(f"non-finite form at t={t:g}", t)
        rows.append({"time": t, "norm": q.norm(), "relative_change": (q - q0).norm() / norm0 if norm0 else 0.0})
    summary = {
        "interpretation": flow.interpretation,
        "grade": q0.grade,
        "steps": steps,
        "constant_flow": flow.is_constant(),
        "max_relative_change": max(r["relative_change"] for r in rows),
        "relative_norm_drift": max(abs(r["norm"] - norm0) for r in rows) / norm0 if norm0 else 0.0,
    }
    if flow.is_constant():
        shift = np.zeros(g.dims)
        for n in range(steps):
            shift += flow.displacement(path.increments[n] if flow.K else np.zeros(0), dt)
        x = np.stack([m.ravel() for m in g.mesh], axis=1) - shift
        exact = SpectralInterpolator(g, q0.coeffs)(x).reshape(q0.data.shape)
        err = np.abs(traj.final.data - exact).max()
        summary["exact_solution_error"] = float(err / max(np.abs(q0.data).max(), 1e-300))
    if "loop" in config:
        lc = config["loop"]
        loop = tr.MaterialLoop.circle(lc["center"], lc["radius"], lc.get("P", 256), lc.get("normal"))
        if q0.grade != fm.ONE_FORM:
            raise ConfigError("circulation needs a one_form")
        rep = tr.kelvin_check(q0, flow, path, loop, T, dt, predictions=False, record_every=every)
        for r, c in zip(rows, rep.circulation):
            r["circulation"] = c
        summary["circulation_relative_drift"] = rep.relative_drift
        summary["loop_resamples"] = rep.resamples
    return rows, summary


def cmd_transport(args) -> int:
    config = load_config(args.config, TRANSPORT_SCHEMA)
    if args.seed is not None:
        config["seed"] = args.seed
    out = _out_dir(args, config)
    rows, summary = transport_report(config)
    with open(out / "transport.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) for k, v in r.items()})
    (out / "transport_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for key, val in summary.items():
        log.info("%s: %s", key, val)
    return EXIT_OK


# -- verify --------------------------------------------------------------------

def cmd_verify(args) -> int:
    overrides = None
    if args.tolerances:
        try:
            overrides = json.loads(Path(args.tolerances).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read tolerance overrides: {exc}") from exc
    try:
        checks = verify.run_suite(args.suite, overrides)
    except KeyError as exc:
        raise ConfigError(exc.args[0]) from exc
    out = _out_dir(args)
    verify.write_checks(out / f"verify_{args.suite}.csv", checks)
    verify.write_summary(out / f"verify_{args.suite}.json", checks)
    for c in checks:
        print(c.line())
    ok = verify.suite_passed(checks)
    print(f"{args.suite}: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    common.add_argument("--serial", action="store_true", help="single-threaded FFTs for bit reproducibility")
    common.add_argument("--out", help="output directory")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])

    p = argparse.ArgumentParser(prog="stochgfd", description="Stochastic transport for geophysical fluid models")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("run-sqg", parents=[common], help="integrate the stochastic QG model")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_run_sqg)
    s = sub.add_parser("pod-extract", parents=[common], help="POD basis from a snapshot directory")
    s.add_argument("--snapshots", help="directory of velocity snapshots")
    s.add_argument("--K", type=int, help="number of modes")
    s.add_argument("--center", action="store_true", help="subtract the snapshot mean")
    s.add_argument("--leray", action="store_true", help="project snapshots onto divergence-free fields")
    s.add_argument("--config", help="unused; accepted for symmetry")
    s.set_defaults(func=cmd_pod)
    s = sub.add_parser("transport", parents=[common], help="kinematic transport report")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_transport)
    s = sub.add_parser("verify", parents=[common], help="run a verification suite")
    s.add_argument("suite", help=f"one of {', '.join(list(verify.SUITES) + ['all'])}")
    s.add_argument("--tolerances", help="JSON file of per-suite tolerance overrides")
    s.add_argument("--config", help="alias of --tolerances")
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "command", None) == "verify" and args.config and not args.tolerances:
        args.tolerances = args.config
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        with scipy.fft.set_workers(1 if args.serial else -1):
            return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalBlowup as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
