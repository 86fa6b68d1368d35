"""Command line interface.

Subcommands:

sweep     Monte Carlo RRMSE sweep over a training-amplitude grid;
          writes sweep.csv, crb.csv, manifest.json.
single    One end-to-end estimation trial with full diagnostics;
          writes report.json and estimates.csv.
crb       Cramér–Rao predictions only (no Monte Carlo); writes crb.csv.
validate  Excitation check of the training plan; prints per-controller
          rank, smallest singular value, and condition number.

Every subcommand takes --config (JSON or TOML); without it the packaged
reference scenario is used. Exit status is 0 only when every requested
grid point completed.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import sys

import numpy as np

from . import experiment, training
from .exceptions import DroopmleError

REFERENCE_SCENARIO = "reference_scenario.json"


def load_spec(path=None) -> experiment.ExperimentSpec:
    """Load an ExperimentSpec from a config file or the packaged default."""
    if path is not None:
        return experiment.ExperimentSpec.from_file(path)
    ref = importlib.resources.files("droopmle") / "data" / REFERENCE_SCENARIO
    return experiment.ExperimentSpec.from_dict(json.loads(ref.read_text()))


def parse_delta_spec(text: str) -> tuple:
    """Parse --delta: a comma list, or start:stop:count (log spaced)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(
                f"bad delta range {text!r}; expected start:stop:count"
            )
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("delta range needs at least one point")
        if start <= 0 or stop <= 0:
            raise ValueError("delta range endpoints must be positive")
        return tuple(float(d) for d in np.geomspace(start, stop, count))
    values = tuple(float(part) for part in text.split(",") if part.strip())
    if not values:
        raise ValueError(f"no deltas in {text!r}")
    return values


def apply_overrides(spec: experiment.ExperimentSpec, args) -> experiment.ExperimentSpec:
    """Apply common command line overrides to a loaded spec."""
    import dataclasses

    changes = {}
    if getattr(args, "controller", None) is not None:
        changes["controllers"] = (args.controller,)
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "delta", None) is not None:
        changes["deltas"] = parse_delta_spec(args.delta)
    if getattr(args, "noiseless", False):
        changes["phi"] = 0.0
    if getattr(args, "exact_nominal_voltage", False):
        changes["exact_nominal"] = True
    if getattr(args, "slots", None) is not None:
        changes["slots"] = args.slots
    if not changes:
        return spec
    return dataclasses.replace(spec, **changes)


def _add_common(parser, delta_help):
    parser.add_argument(
        "--config",
        metavar="PATH",
        help="experiment config, JSON or TOML (default: packaged reference scenario)",
    )
    parser.add_argument(
        "--controller",
        type=int,
        metavar="K",
        help="run only this controller (1-based)",
    )
    parser.add_argument("--trials", type=int, metavar="T", help="Monte Carlo trials")
    parser.add_argument("--seed", type=int, metavar="S", help="master seed")
    parser.add_argument("--delta", metavar="SPEC", help=delta_help)
    parser.add_argument(
        "--noiseless",
        action="store_true",
        help="disable measurement noise (phi = 0)",
    )
    parser.add_argument(
        "--exact-nominal-voltage",
        action="store_true",
        dest="exact_nominal_voltage",
        help="give estimators the exact nominal voltage",
    )
    parser.add_argument(
        "--slots", type=int, metavar="N", help="training length override"
    )
    parser.add_argument(
        "--out", metavar="DIR", default=".", help="output directory (default: .)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="droopmle",
        description=(
            "Decentralized capacity and load estimation in droop-controlled "
            "DC microgrids: simulation, maximum likelihood estimation, and "
            "Cramér–Rao analysis."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sweep = sub.add_parser(
        "sweep", help="Monte Carlo RRMSE sweep over training amplitudes"
    )
    _add_common(
        p_sweep,
        "amplitude grid: comma list '0.001,0.005' or log range 'start:stop:count'",
    )

    p_single = sub.add_parser("single", help="one estimation trial with diagnostics")
    _add_common(p_single, "training amplitude (single value)")

    p_crb = sub.add_parser("crb", help="Cramér–Rao predictions, no Monte Carlo")
    _add_common(
        p_crb,
        "amplitude grid: comma list '0.001,0.005' or log range 'start:stop:count'",
    )

    p_val = sub.add_parser("validate", help="check plan excitation per controller")
    _add_common(p_val, "training amplitude (single value)")
    return parser


def _print_failures(failures):
    for f in failures:
        where = f"delta {f['delta']:g}" if f["delta"] is not None else "spec"
        if f.get("controller") is not None:
            where += f", controller {f['controller']}"
        print(f"error: {where}: {f['reason']}", file=sys.stderr)


def cmd_sweep(args) -> int:
    spec = apply_overrides(load_spec(args.config), args)
    result = experiment.run_sweep(spec)
    paths = result.write(args.out)
    print(
        f"wrote {paths['sweep']}, {paths['crb']}, {paths['manifest']} "
        f"({len(result.rows)} rows, {result.elapsed_seconds:.2f} s, "
        f"backend {result.backend})"
    )
    if result.failures:
        _print_failures(result.failures)
        return 1
    return 0


def cmd_single(args) -> int:
    spec = apply_overrides(load_spec(args.config), args)
    if getattr(args, "delta", None) is not None:
        deltas = parse_delta_spec(args.delta)
        if len(deltas) != 1:
            raise ValueError("'single' takes exactly one --delta value")
        delta = deltas[0]
    else:
        delta = spec.deltas[len(spec.deltas) // 2]
    report = experiment.run_single(spec, delta)
    paths = report.write(args.out)
    print(report.text())
    print(f"wrote {paths['report']}, {paths['estimates']}")
    return 0


def cmd_crb(args) -> int:
    spec = apply_overrides(load_spec(args.config), args)
    rows, failures = experiment.report_crb(spec)
    import os

    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "crb.csv")
    experiment._write_csv(path, experiment.CRB_COLUMNS, rows)
    print(f"wrote {path} ({len(rows)} rows)")
    if failures:
        _print_failures(failures)
        return 1
    return 0


def cmd_validate(args) -> int:
    spec = apply_overrides(load_spec(args.config), args)
    # a plan has to serve every unit, so default to checking all of them
    if args.controller is None:
        controllers = tuple(range(1, spec.scenario.unit_count + 1))
    else:
        controllers = spec.controllers
    status = 0
    for delta in spec.deltas:
        plan = spec.build_plan(delta)
        report = training.validate_excitation(spec.scenario, plan, controllers)
        for entry in report.entries:
            verdict = "sufficient" if entry.sufficient else "insufficient"
            print(
                f"delta {delta:g} controller {entry.controller}: "
                f"rank {entry.rank}/{entry.required}, "
                f"smallest singular value {entry.smallest_singular_value:.3e}, "
                f"condition number {entry.condition_number:.3e} ({verdict})"
            )
            if not entry.sufficient:
                status = 1
    if status:
        print("error: plan does not excite all parameters", file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "sweep": cmd_sweep,
        "single": cmd_single,
        "crb": cmd_crb,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (DroopmleError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
