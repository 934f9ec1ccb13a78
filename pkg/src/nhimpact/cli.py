"""Command line interface.

    nhimpact run --scenario rolling_sphere_rough --t-end 3 --output-dir out
    nhimpact validate --config system.json
    nhimpact list

Exit status: 0 on success, 2 for configuration errors (including failed
validation), 3 for numerical failures, which name the failing operation.
"""

from __future__ import annotations

import argparse
import inspect
import sys
from typing import Optional, Sequence

from .config import RunConfig
from .driver import run, validate
from .errors import ConfigError, NumericalError
from .scenarios import SCENARIOS, build

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parse_param(text: str) -> tuple[str, object]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--param expects KEY=VALUE, got {text!r}")
    try:
        return key, float(value)
    except ValueError:
        return key, value


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=sorted(SCENARIOS), help="built-in scenario name")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="scenario parameter (repeatable)")
    p.add_argument("--q0", help="initial configuration, comma separated")
    p.add_argument("--p0", help="initial momentum, comma separated")
    p.add_argument("--side", help="initial side (+ or -)")
    p.add_argument("--mode", choices=["elastic", "inelastic"])
    p.add_argument("--t-end", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--output-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nhimpact", description="Impacts of nonholonomic mechanical systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="integrate and write trajectory.csv / events.jsonl")
    _add_common(p_run)
    p_run.add_argument("--validate-only", action="store_true", help="only run the validation checks")
    p_val = sub.add_parser("validate", help="check a configuration without integrating")
    _add_common(p_val)
    sub.add_parser("list", help="list built-in scenarios and their parameters")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config and args.scenario:
        raise ConfigError("give either --config or --scenario, not both")
    if args.config:
        base = RunConfig.load(args.config)
    elif args.scenario:
        base = RunConfig(scenario=args.scenario)
    else:
        raise ConfigError("one of --config or --scenario is required")
    params = dict(_parse_param(t) for t in args.param)
    if params:
        if base.scenario is None:
            raise ConfigError("--param only applies to scenarios")
        params = {**base.scenario_params, **params}
    return base.updated(
        scenario_params=params or None,
        q0=args.q0,
        p0=args.p0,
        side=args.side,
        mode=args.mode,
        t_end=args.t_end,
        dt=args.dt,
        output_dir=args.output_dir,
    )


def _list() -> int:
    for name, fn in SCENARIOS.items():
        params = ", ".join(f"{k}={v.default}" for k, v in inspect.signature(fn).parameters.items())
        sc = build(name)
        print(f"{name}({params})  n={sc.initial.n} side={sc.initial_side.symbol} t_end={sc.t_end:g}")
    return EXIT_OK


VALUE_FLAGS = ("--q0", "--p0", "--side", "--t-end", "--dt")


def _join_values(argv: Sequence[str]) -> list[str]:
    """Rewrite ``--q0 -1,0`` as ``--q0=-1,0`` so argparse does not read the value as a flag."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] in VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") and argv[i + 1] != "--":
            out.append(f"{argv[i]}={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(_join_values(list(argv)))
    if args.command == "list":
        return _list()
    try:
        config = config_from_args(args)
        if args.command == "validate" or args.validate_only:
            report = validate(config)
            print(report.format())
            return EXIT_OK if report.ok else EXIT_CONFIG
        report = validate(config)
        if not report.ok:
            print(report.format(), file=sys.stderr)
            return EXIT_CONFIG
        result = run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error in {exc.operation}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    trapped = sum(1 for e in result.events if e["trapped"])
    print(
        f"{len(result.rows)} rows, {len(result.events)} events ({trapped} trapped), "
        f"{result.branch_count} branch(es) -> {result.trajectory_path}, {result.events_path}"
    )
    return EXIT_OK
