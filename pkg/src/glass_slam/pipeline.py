"""End-to-end run: (simulate) -> front end -> back end -> export -> evaluate."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .config import PipelineConfig, dump_config
from .core_types import Pose2
from .evaluation import GlassCoverageReport, glass_coverage, trajectory_error
from .global_glass import GlassPointRegistry
from .lidar_simulator import Environment, PlaybackResult, Trajectory, playback
from .map_export import OccupancyMap, build_map, write_map
from .scan_log import (
    ScanLogRecord,
    load_scan_log,
    read_environment,
    read_trajectory_file,
    write_environment,
    write_scan_log,
    write_trajectory,
)
from .scenarios import corridor_loop, corridor_loop_trajectory
from .slam_backend import Backend
from .slam_frontend import Frontend

log = logging.getLogger(__name__)


@dataclass
class SlamResult:
    frontend: Frontend
    backend: Backend
    map: OccupancyMap

    @property
    def trajectory(self) -> list:
        return self.backend.trajectory()

    @property
    def local_trajectory(self) -> list:
        return self.backend.local_trajectory()


@dataclass
class PipelineResult:
    slam: SlamResult
    paths: dict = field(default_factory=dict)
    coverage: Optional[GlassCoverageReport] = None
    error_before: Optional[tuple] = None
    error_after: Optional[tuple] = None


def simulate(config: PipelineConfig, env: Optional[Environment] = None, traj: Optional[Trajectory] = None) -> PlaybackResult:
    """Play the configured (or given) world and trajectory through the simulator."""
    if env is None:
        env = read_environment(config.io.env) if config.io.env else _scenario_env(config)
    if traj is None:
        if config.io.traj:
            traj = read_trajectory_file(config.io.traj)
        else:
            traj = corridor_loop_trajectory(laps=config.simulation.laps, step=config.simulation.step)
    return playback(env, traj, config.lidar, seed=config.seed, odometry_drift=config.simulation.odometry_drift)


def _scenario_env(config: PipelineConfig) -> Environment:
    if config.simulation.scenario == "corridor":
        return corridor_loop(glass=True)
    raise ValueError(f"unknown scenario {config.simulation.scenario!r}")


def records_from_playback(result: PlaybackResult) -> list:
    return [ScanLogRecord(scan, odom) for scan, odom in zip(result.scans, result.odometry)]


def run_slam(records, config: PipelineConfig) -> SlamResult:
    registry = GlassPointRegistry(config.grid.resolution)
    frontend = Frontend(config.detector, config.grid, config.match, config.glass, registry)
    backend = Backend(
        config.loop,
        optimize_every=config.backend.optimize_every,
        loop_closure=config.backend.loop_closure,
    )
    prev_odom = None
    for rec in records:
        delta = None
        if rec.odometry is not None and prev_odom is not None:
            delta = rec.odometry.relative_to(prev_odom)
        prev_odom = rec.odometry
        for event in frontend.process_scan(rec.scan, delta):
            if backend.handle(event):
                frontend.correction = backend.latest_correction()
    if frontend.state.submaps:
        backend.run_optimization()
        frontend.correction = backend.latest_correction()
    submaps = frontend.state.submaps
    occupancy = build_map(submaps, backend.submap_poses(), config.grid.resolution, config.thresholds)
    return SlamResult(frontend, backend, occupancy)


def run_pipeline(config: PipelineConfig, write: bool = True) -> PipelineResult:
    """Run everything the configuration asks for and write the artifacts to ``io.out``."""
    out = Path(config.io.out)
    name = config.io.name
    paths: dict = {}
    env = truth = None
    if write:
        out.mkdir(parents=True, exist_ok=True)
    if config.io.log:
        records = list(load_scan_log(config.io.log))
        if config.io.env:
            env = read_environment(config.io.env)
        if config.io.traj:
            truth = read_trajectory_file(config.io.traj)
    else:
        sim = simulate(config)
        env, truth = sim.environment, sim.ground_truth
        records = records_from_playback(sim)
        if write:
            paths["log"] = out / f"{name}.scans"
            write_scan_log(paths["log"], records)
            paths["env"] = out / f"{name}.env"
            write_environment(paths["env"], env)
            paths["truth"] = out / f"{name}.truth.traj"
            write_trajectory(paths["truth"], list(truth))

    log.info("running SLAM on %d scans (mode=%s)", len(records), config.glass.mode)
    slam = run_slam(records, config)
    result = PipelineResult(slam, paths)

    if truth is not None and len(truth) == len(records):
        truth_list = list(truth)
        result.error_before = trajectory_error(slam.local_trajectory, truth_list)
        result.error_after = trajectory_error(slam.trajectory, truth_list)
    if env is not None and env.is_glass.any():
        first = truth.poses[0] if truth is not None and len(truth) else Pose2()
        result.coverage = glass_coverage(slam.map, env, config.evaluation.corridor, map_to_env=first)

    if write:
        pgm, meta = write_map(slam.map, out / name)
        paths["map"], paths["map_meta"] = pgm, meta
        paths["trajectory"] = out / f"{name}.traj"
        write_trajectory(paths["trajectory"], slam.trajectory)
        paths["local_trajectory"] = out / f"{name}.local.traj"
        write_trajectory(paths["local_trajectory"], slam.local_trajectory)
        paths["registry"] = out / f"{name}.glass"
        paths["registry"].write_text(slam.frontend.registry.dump())
        paths["config"] = out / f"{name}.config.yaml"
        paths["config"].write_text(dump_config(config))
        if result.coverage is not None:
            paths["report"] = out / f"{name}.report.txt"
            text = result.coverage.as_text()
            if result.error_after is not None:
                text += (
                    f"trajectory RMSE before optimization: {result.error_before[0]:.4f} m, {result.error_before[1]:.5f} rad\n"
                    f"trajectory RMSE after optimization:  {result.error_after[0]:.4f} m, {result.error_after[1]:.5f} rad\n"
                )
            paths["report"].write_text(text)
            paths["report_kv"] = out / f"{name}.report.kv"
            paths["report_kv"].write_text(result.coverage.as_key_values())
    return result
