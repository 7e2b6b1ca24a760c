"""Planar LiDAR simulator over line-segment worlds with diffuse and glass walls.

Glass returns only near normal incidence, with a sharp intensity peak;
at other angles the beam goes on to whatever lies behind it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core_types import LaserScan, Pose2

DIFFUSE = "diffuse"
GLASS = "glass"
MATERIALS = (DIFFUSE, GLASS)


@dataclass(frozen=True, eq=False)
class Environment:
    """Static world: segments (M, 4) as x1 y1 x2 y2 plus one material per segment."""

    segments: np.ndarray
    materials: tuple

    def __post_init__(self):
        seg = np.array(self.segments, dtype=float).reshape(-1, 4)
        mats = tuple(self.materials)
        if len(mats) != seg.shape[0]:
            raise ValueError("one material per segment is required")
        for m in mats:
            if m not in MATERIALS:
                raise ValueError(f"unknown material {m!r}")
        if np.any(np.hypot(seg[:, 2] - seg[:, 0], seg[:, 3] - seg[:, 1]) <= 0):
            raise ValueError("segments must have nonzero length")
        seg.setflags(write=False)
        object.__setattr__(self, "segments", seg)
        object.__setattr__(self, "materials", mats)

    @classmethod
    def from_list(cls, items: Sequence) -> "Environment":
        """Build from ``[((x1, y1), (x2, y2), material), ...]``."""
        segs = [(a[0], a[1], b[0], b[1]) for a, b, _ in items]
        return cls(np.array(segs, dtype=float).reshape(-1, 4), tuple(m for _, _, m in items))

    @property
    def is_glass(self) -> np.ndarray:
        return np.array([m == GLASS for m in self.materials], dtype=bool)

    def glass_segments(self) -> np.ndarray:
        return self.segments[self.is_glass]

    def __len__(self) -> int:
        return self.segments.shape[0]


@dataclass(frozen=True)
class LidarSpec:
    beam_count: int = 360
    field_of_view: float = 2 * math.pi
    range_max: float = 10.0
    range_noise_sigma: float = 0.01
    diffuse_intensity_mean: float = 1500.0
    diffuse_intensity_sigma: float = 300.0
    glass_peak_intensity: float = 6000.0
    glass_specular_half_angle: float = math.radians(5.0)
    glass_peak_shape_width: float = math.radians(5.0)

    def __post_init__(self):
        if self.beam_count < 1:
            raise ValueError("beam_count must be >= 1")
        if not self.glass_peak_intensity > self.diffuse_intensity_mean:
            raise ValueError("glass peak must exceed the diffuse intensity mean")

    def beam_angles(self) -> np.ndarray:
        n = self.beam_count
        if n == 1:
            return np.zeros(1)
        if self.field_of_view >= 2 * math.pi - 1e-12:
            return -math.pi + np.arange(n) * (2 * math.pi / n)
        return np.linspace(-self.field_of_view / 2, self.field_of_view / 2, n)


@dataclass(frozen=True, eq=False)
class Trajectory:
    timestamps: np.ndarray
    poses: tuple

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=float).reshape(-1)
        if len(ts) != len(self.poses):
            raise ValueError("one timestamp per pose is required")
        if len(ts) > 1 and not np.all(np.diff(ts) > 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "poses", tuple(self.poses))

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self):
        return iter(zip(self.timestamps.tolist(), self.poses))


def _intersections(env: Environment, origin: np.ndarray, directions: np.ndarray):
    """Ray parameter t (B, M) to every segment (inf on miss) and cos of incidence."""
    seg = env.segments
    p = seg[:, 0:2]
    e = seg[:, 2:4] - p
    d = directions  # (B, 2) unit
    denom = d[:, None, 0] * e[None, :, 1] - d[:, None, 1] * e[None, :, 0]
    w = p[None, :, :] - origin[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (w[..., 0] * e[None, :, 1] - w[..., 1] * e[None, :, 0]) / denom
        u = (w[..., 0] * d[:, None, 1] - w[..., 1] * d[:, None, 0]) / denom
    hit = (np.abs(denom) > 1e-15) & (t > 1e-12) & (u >= 0.0) & (u <= 1.0)
    t = np.where(hit, t, np.inf)
    seg_len = np.hypot(e[:, 0], e[:, 1])
    cos_inc = np.abs(denom) / seg_len[None, :]  # |d x e| / |e| = |cos| to the normal
    return t, np.clip(cos_inc, 0.0, 1.0)


def _trace(env: Environment, origin, directions, spec: LidarSpec):
    """Deterministic part of a sweep: (true range, glass-hit flag, incidence, no-return)."""
    b = directions.shape[0]
    if len(env) == 0:
        return np.full(b, spec.range_max), np.zeros(b, bool), np.zeros(b), np.ones(b, bool)
    t, cos_inc = _intersections(env, np.asarray(origin, float), directions)
    incidence = np.arccos(cos_inc)
    glass = env.is_glass[None, :]
    stops = np.isfinite(t) & (~glass | (incidence <= spec.glass_specular_half_angle + 1e-12))
    t_stop = np.where(stops, t, np.inf)
    k = np.argmin(t_stop, axis=1)
    rows = np.arange(b)
    rng_true = t_stop[rows, k]
    no_return = ~(rng_true <= spec.range_max)
    return (
        np.where(no_return, spec.range_max, rng_true),
        env.is_glass[k] & ~no_return,
        incidence[rows, k],
        no_return,
    )


def _observe(rng_true, is_glass, incidence, no_return, spec: LidarSpec, rng: Optional[np.random.Generator]):
    n = rng_true.shape[0]
    if rng is not None and spec.range_noise_sigma > 0:
        noise = rng.normal(0.0, spec.range_noise_sigma, n)
    else:
        noise = np.zeros(n)
    if rng is not None and spec.diffuse_intensity_sigma > 0:
        diffuse = rng.normal(spec.diffuse_intensity_mean, spec.diffuse_intensity_sigma, n)
    else:
        diffuse = np.full(n, spec.diffuse_intensity_mean)
    ranges = np.clip(rng_true + noise, 0.0, spec.range_max)
    glass_intensity = spec.glass_peak_intensity * np.exp(-((incidence / spec.glass_peak_shape_width) ** 2))
    intensity = np.where(is_glass, glass_intensity, np.maximum(diffuse, 0.0))
    ranges = np.where(no_return, spec.range_max, ranges)
    intensity = np.where(no_return, 0.0, intensity)
    return ranges, intensity


def cast_beam(
    env: Environment,
    origin,
    direction: float,
    spec: LidarSpec = LidarSpec(),
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, float, bool]:
    """Trace one beam; returns (range, intensity, no_return)."""
    if not math.isfinite(direction):
        raise ValueError("beam direction must be finite")
    d = np.array([[math.cos(direction), math.sin(direction)]])
    traced = _trace(env, np.asarray(origin, float), d, spec)
    ranges, intensity = _observe(*traced, spec, rng)
    return float(ranges[0]), float(intensity[0]), bool(traced[3][0])


def simulate_scan(
    env: Environment,
    pose: Pose2,
    spec: LidarSpec = LidarSpec(),
    rng: Optional[np.random.Generator] = None,
    timestamp: float = 0.0,
) -> LaserScan:
    """One sweep of ``spec.beam_count`` beams centred on the pose heading.

    Without ``rng`` the sweep is noise-free.
    """
    angles = spec.beam_angles()
    world = angles + pose.theta
    d = np.column_stack((np.cos(world), np.sin(world)))
    rng_true, is_glass, incidence, no_return = _trace(env, np.array([pose.x, pose.y]), d, spec)
    ranges, intensity = _observe(rng_true, is_glass, incidence, no_return, spec, rng)
    return LaserScan(angles, ranges, intensity, spec.range_max, timestamp, no_return)


def drifting_odometry(trajectory: Trajectory, drift: float) -> list:
    """Dead-reckoned poses whose position error grows by ``drift`` per metre travelled.

    Each true increment is distorted by a body-frame translation error of
    magnitude ``drift * step_length`` (split evenly between forward scale and
    lateral slip) and a heading error of ``drift * step_length`` radians.
    """
    poses = list(trajectory.poses)
    if not poses:
        return []
    out = [poses[0]]
    for prev, cur in zip(poses[:-1], poses[1:]):
        delta = cur.relative_to(prev)
        step = math.hypot(delta.x, delta.y)
        err = drift * step / math.sqrt(2.0)
        noisy = Pose2(delta.x + err, delta.y + err, delta.theta + drift * step)
        out.append(out[-1].compose(noisy))
    return out


@dataclass
class PlaybackResult:
    scans: list
    odometry: list
    ground_truth: Trajectory
    environment: Environment


def playback(
    env: Environment,
    trajectory: Trajectory,
    spec: LidarSpec = LidarSpec(),
    seed: int = 0,
    odometry_drift: float = 0.0,
) -> PlaybackResult:
    """Simulate one scan per waypoint; fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    scans = [
        simulate_scan(env, pose, spec, rng, timestamp=t) for t, pose in trajectory
    ]
    odometry = drifting_odometry(trajectory, odometry_drift) if odometry_drift else list(trajectory.poses)
    return PlaybackResult(scans, odometry, trajectory, env)
