"""Command line: ``glass-slam {simulate,map,evaluate,calibrate}``.

Every configuration field is exposed as ``--section.field VALUE``. Precedence
is defaults, then ``--config FILE``, then flags.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig, apply_overrides, flag_names, load_config
from .core_types import Pose2
from .evaluation import EvaluationError, glass_coverage, trajectory_error
from .glass_detector import detect_glass, effective_intensities
from .lidar_simulator import simulate_scan
from .map_export import read_map
from .occupancy_submap import SubmapStateError
from .pipeline import records_from_playback, run_pipeline, simulate
from .scan_log import (
    ParseError,
    load_scan_log,
    read_environment,
    read_trajectory_file,
    write_environment,
    write_scan_log,
    write_trajectory,
)
from .scenarios import glass_panel
from .slam_backend import GraphError

# exit codes per error category
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_INPUT = 4
EXIT_RUNTIME = 5
EXIT_IO = 6

SHORTCUTS = {
    "mode": "glass.mode",
    "env": "io.env",
    "traj": "io.traj",
    "log": "io.log",
    "out": "io.out",
    "name": "io.name",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--seed", dest="seed", default=None, help="random seed")
    for short, key in SHORTCUTS.items():
        p.add_argument(f"--{short}", dest=key, default=None, help=f"same as --{key}")
    group = p.add_argument_group("configuration fields")
    for key, default in flag_names():
        if key in SHORTCUTS.values():
            group.add_argument(f"--{key}", dest=key, default=None, help=argparse.SUPPRESS)
        else:
            group.add_argument(f"--{key}", dest=key, default=None, metavar="V", help=f"default: {default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glass-slam", description="Lidar SLAM with glass detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a scan log, environment and ground truth")
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("map", help="run SLAM and export the map, trajectory and report")
    _add_config_flags(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("evaluate", help="score an exported map and/or trajectory")
    p.add_argument("--map", dest="map_meta", help="map metadata (.yaml) written by 'map'")
    p.add_argument("--env", help="environment file with the ground-truth glass")
    p.add_argument("--trajectory", help="estimated trajectory file")
    p.add_argument("--truth", help="ground-truth trajectory file")
    p.add_argument("--corridor", type=float, default=None, help="matching distance in metres (default: two cells)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", help="print the intensity profile around the strongest return")
    p.add_argument("--log", help="scan log to inspect (default: simulated bench panel)")
    p.add_argument("--scan", type=int, default=0, help="record index within the log")
    p.add_argument("--distance", type=float, default=1.0, help="panel distance for the simulated bench")
    p.add_argument("--half-width", type=int, default=12, help="beams shown on each side of the peak")
    p.add_argument("--config", help="YAML configuration file (detector and lidar blocks)")
    p.add_argument("--seed", default=None)
    for key in ("detector.thresh", "detector.grad", "detector.width"):
        p.add_argument(f"--{key}", dest=key, default=None)
    p.set_defaults(func=cmd_calibrate)
    return parser


def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {
        k: v for k, v in vars(args).items() if v is not None and (k == "seed" or "." in k)
    }
    return apply_overrides(config, overrides)


def cmd_simulate(args) -> int:
    config = config_from_args(args)
    sim = simulate(config)
    out = Path(config.io.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / config.io.name
    write_scan_log(f"{stem}.scans", records_from_playback(sim))
    write_environment(f"{stem}.env", sim.environment)
    write_trajectory(f"{stem}.truth.traj", list(sim.ground_truth))
    print(f"wrote {len(sim.scans)} scans to {stem}.scans")
    print(f"wrote {stem}.env and {stem}.truth.traj")
    return 0


def cmd_map(args) -> int:
    config = config_from_args(args)
    result = run_pipeline(config)
    for key, path in result.paths.items():
        print(f"{key}: {path}")
    if result.coverage is not None:
        sys.stdout.write(result.coverage.as_text())
    if result.error_after is not None:
        print(f"trajectory RMSE before optimization: {result.error_before[0]:.4f} m")
        print(f"trajectory RMSE after optimization:  {result.error_after[0]:.4f} m")
    return 0


def cmd_evaluate(args) -> int:
    if not args.map_meta and not args.trajectory:
        raise ConfigError("nothing to evaluate: give --map and/or --trajectory")
    if args.map_meta:
        if not args.env:
            raise ConfigError("--map needs --env for the ground-truth glass")
        occupancy = read_map(args.map_meta)
        env = read_environment(args.env)
        start = Pose2()
        if args.truth:
            start = read_trajectory_file(args.truth).poses[0]
        report = glass_coverage(occupancy, env, args.corridor, map_to_env=start)
        sys.stdout.write(report.as_text())
    if args.trajectory:
        if not args.truth:
            raise ConfigError("--trajectory needs --truth")
        est = read_trajectory_file(args.trajectory)
        truth = read_trajectory_file(args.truth)
        trans, rot = trajectory_error(list(est), list(truth))
        print(f"trajectory RMSE: {trans:.4f} m, {rot:.5f} rad")
    return 0


def profile_table(scan, params, center: int, half_width: int) -> str:
    intensity = effective_intensities(scan)
    mask = detect_glass(scan, params)
    lo = max(center - half_width, 0)
    hi = min(center + half_width + 1, len(intensity))
    rows = [f"{'beam':>5} {'angle(deg)':>10} {'range(m)':>9} {'intensity':>10} {'diff':>9}  flags"]
    for i in range(lo, hi):
        diff = intensity[i] - intensity[i - 1] if i > 0 else math.nan
        flags = []
        if intensity[i] >= params.thresh:
            flags.append("above")
            if i > 0 and diff >= params.grad:
                flags.append("rising")
        if mask[i]:
            flags.append("GLASS")
        rows.append(
            f"{i:>5} {math.degrees(scan.angles[i]):>10.2f} {scan.ranges[i]:>9.3f} "
            f"{intensity[i]:>10.1f} {diff:>9.1f}  {' '.join(flags)}"
        )
    return "\n".join(rows) + "\n"


def cmd_calibrate(args) -> int:
    config = config_from_args(args)
    if args.log:
        for k, rec in enumerate(load_scan_log(args.log)):
            if k == args.scan:
                scan = rec.scan
                break
        else:
            raise ConfigError(f"{args.log}: no record {args.scan}")
        source = f"{args.log} record {args.scan}"
    else:
        rng = np.random.default_rng(config.seed)
        scan = simulate_scan(glass_panel(args.distance), Pose2(), config.lidar, rng)
        source = f"simulated panel at {args.distance:g} m"
    intensity = effective_intensities(scan)
    peak = int(np.argmax(intensity))
    p = config.detector
    print(f"{source}: peak {intensity[peak]:.1f} at beam {peak}")
    print(f"thresh={p.thresh:g} grad={p.grad:g} width={p.width}")
    sys.stdout.write(profile_table(scan, p, peak, args.half_width))
    print(f"beams marked as glass: {int(detect_glass(scan, p).sum())}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    categories = [
        (ConfigError, "config", EXIT_CONFIG),
        (ParseError, "input", EXIT_INPUT),
        ((EvaluationError, GraphError, SubmapStateError), "runtime", EXIT_RUNTIME),
        (OSError, "io", EXIT_IO),
        (ValueError, "input", EXIT_INPUT),
    ]
    try:
        return args.func(args)
    except Exception as exc:
        for kinds, category, code in categories:
            if isinstance(exc, kinds):
                print(f"glass-slam: {category} error: {exc}", file=sys.stderr)
                return code
        raise

if __name__ == "__main__":
    sys.exit(main())
