"""Command-line entry point.

Subcommands: ``run``, ``validate-config``, ``list-scenarios``.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import RunConfig
from .errors import ConfigurationError
from .runner import run
from .scenarios import build_scenario, scenario_names


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration file")
    p.add_argument("--scenario", help="scenario name (overrides the config)")
    p.add_argument("--end-time", type=float, help="simulated end time in seconds")
    p.add_argument("--dt-window", type=float, help="coupling window size in seconds")
    p.add_argument("--output-dir", help="artifact directory")
    p.add_argument("--write-interval", type=float, help="snapshot cadence in seconds")
    p.add_argument("--force-mode", choices=["newton", "pressure"],
                   help="interface force interpolation mode")
    p.add_argument("--seed", type=int, help="jitter seed for the initial lattice")
    p.add_argument("--spacing", type=float, help="particle spacing in metres")
    p.add_argument("--workers", type=int, help="worker count (results are identical "
                                               "for any value)")


def _config_from_args(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if args.scenario:
        config = RunConfig.from_dict({**config.to_dict(), "scenario": args.scenario})
    if args.end_time is not None:
        config.end_time = args.end_time
    if args.dt_window is not None:
        config.coupling.window_dt = args.dt_window
    if args.output_dir is not None:
        config.output.directory = args.output_dir
    if args.write_interval is not None:
        config.output.write_interval = args.write_interval
    if args.force_mode is not None:
        config = RunConfig.from_dict({**config.to_dict(), "force_mode": args.force_mode})
    if args.seed is not None:
        config.seed = args.seed
    if args.spacing is not None:
        config.spacing = args.spacing
    if args.workers is not None:
        config.workers = args.workers
    return config


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sphfsi",
        description="Partitioned SPH/FEM fluid-structure interaction benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a benchmark scenario")
    _add_run_flags(run_p)

    val_p = sub.add_parser("validate-config", help="parse and check a configuration file")
    val_p.add_argument("--config", required=True)

    sub.add_parser("list-scenarios", help="print the known scenario names")

    args = parser.parse_args(argv)

    if args.command == "list-scenarios":
        for name in scenario_names():
            scenario = build_scenario(name)
            print(f"{name}: tank {scenario.tank[0]} x {scenario.tank[1]} m, "
                  f"default spacing {scenario.spacing} m, end time {scenario.end_time} s")
        return 0

    if args.command == "validate-config":
        try:
            config = RunConfig.load(args.config)
        except (ConfigurationError, OSError) as exc:
            print(f"invalid configuration: {exc}", file=sys.stderr)
            return 2
        print(config.to_json())
        return 0

    try:
        config = _config_from_args(args)
    except (ConfigurationError, OSError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    result = run(config)
    print(f"{result.status}: {result.windows} windows, {result.steps} fluid steps, "
          f"{result.wall_time:.1f} s wall time -> {result.output_dir}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
