"""Rigid 2D transforms, poses and laser scan containers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def normalize_angles(theta: np.ndarray) -> np.ndarray:
    wrapped = np.remainder(np.asarray(theta, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(wrapped <= -math.pi, wrapped + TWO_PI, wrapped)


@dataclass(frozen=True)
class Transform2:
    """Homogeneous rigid transform in the plane: p -> R(rotation) p + translation."""

    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", normalize_angle(float(self.rotation)))
        object.__setattr__(self, "tx", float(self.tx))
        object.__setattr__(self, "ty", float(self.ty))

    @classmethod
    def identity(cls) -> "Transform2":
        return cls(0.0, 0.0, 0.0)

    @property
    def translation(self) -> tuple[float, float]:
        return (self.tx, self.ty)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s, self.tx], [s, c, self.ty], [0.0, 0.0, 1.0]])

    def compose(self, other: "Transform2") -> "Transform2":
        return compose(self, other)

    def inverse(self) -> "Transform2":
        return inverse(self)

    def apply(self, p) -> tuple[float, float]:
        return apply(self, p)

    def apply_many(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 2) array of points."""
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        out = np.empty_like(points)
        out[:, 0] = c * points[:, 0] - s * points[:, 1] + self.tx
        out[:, 1] = s * points[:, 0] + c * points[:, 1] + self.ty
        return out

    def as_pose(self) -> "Pose2":
        return Pose2(self.tx, self.ty, self.rotation)


def compose(a: Transform2, b: Transform2) -> Transform2:
    """Return a o b, i.e. apply(compose(a, b), p) == apply(a, apply(b, p))."""
    c, s = math.cos(a.rotation), math.sin(a.rotation)
    return Transform2(
        a.rotation + b.rotation,
        a.tx + c * b.tx - s * b.ty,
        a.ty + s * b.tx + c * b.ty,
    )


def inverse(t: Transform2) -> Transform2:
    c, s = math.cos(t.rotation), math.sin(t.rotation)
    return Transform2(-t.rotation, -(c * t.tx + s * t.ty), s * t.tx - c * t.ty)


def apply(t: Transform2, p) -> tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    if t.rotation == 0.0 and t.tx == 0.0 and t.ty == 0.0:
        return (x, y)
    c, s = math.cos(t.rotation), math.sin(t.rotation)
    return (c * x - s * y + t.tx, s * x + c * y + t.ty)


@dataclass(frozen=True)
class Pose2:
    """Planar pose. Shares its algebra with Transform2."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def identity(cls) -> "Pose2":
        return cls(0.0, 0.0, 0.0)

    @classmethod
    def from_transform(cls, t: Transform2) -> "Pose2":
        return cls(t.tx, t.ty, t.rotation)

    def as_transform(self) -> Transform2:
        return Transform2(self.theta, self.x, self.y)

    def compose(self, other: "Pose2") -> "Pose2":
        return Pose2.from_transform(compose(self.as_transform(), other.as_transform()))

    def inverse(self) -> "Pose2":
        return Pose2.from_transform(inverse(self.as_transform()))

    def relative_to(self, base: "Pose2") -> "Pose2":
        """Express this pose in the frame of ``base``: base^-1 o self."""
        return base.inverse().compose(self)

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        return self.as_transform().apply_many(points)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


def _readonly(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LaserScan:
    """One sweep of a planar range sensor.

    ``no_return`` flags beams without an echo; their range holds the
    ``range_max`` sentinel. When omitted it is derived as ``ranges >= range_max``.
    """

    angles: np.ndarray
    ranges: np.ndarray
    intensities: np.ndarray
    range_max: float
    timestamp: float = 0.0
    no_return: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        angles = _readonly(self.angles, float)
        ranges = _readonly(self.ranges, float)
        intensities = _readonly(self.intensities, float)
        n = angles.shape[0] if angles.ndim == 1 else -1
        if n < 1 or ranges.shape != (n,) or intensities.shape != (n,):
            raise ValueError(
                "angles, ranges and intensities must be 1-D arrays of equal length >= 1"
            )
        if n > 1 and not np.all(np.diff(angles) > 0):
            raise ValueError("beam angles must be strictly increasing")
        if self.no_return is None:
            no_return = ranges >= self.range_max
        else:
            no_return = np.array(self.no_return, dtype=bool)
            if no_return.shape != (n,):
                raise ValueError("no_return flags must match the beam count")
        if np.any(ranges < 0) or np.any(ranges[~no_return] > self.range_max):
            raise ValueError("ranges must lie in [0, range_max]")
        ranges = np.where(no_return, self.range_max, ranges)
        ranges.setflags(write=False)
        no_return = _readonly(no_return, bool)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "intensities", intensities)
        object.__setattr__(self, "no_return", no_return)
        object.__setattr__(self, "range_max", float(self.range_max))
        object.__setattr__(self, "timestamp", float(self.timestamp))

    def __len__(self) -> int:
        return self.angles.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return ~self.no_return

    def endpoints(self, pose: Optional[Pose2] = None) -> np.ndarray:
        """Beam endpoints (N, 2) in the frame of ``pose`` (sensor frame when None).

        No-return beams end at ``range_max``.
        """
        local = np.column_stack(
            (self.ranges * np.cos(self.angles), self.ranges * np.sin(self.angles))
        )
        if pose is None:
            return local
        return pose.transform_points(local)

    def equals(self, other: "LaserScan") -> bool:
        return (
            self.timestamp == other.timestamp
            and self.range_max == other.range_max
            and np.array_equal(self.angles, other.angles)
            and np.array_equal(self.ranges, other.ranges)
            and np.array_equal(self.intensities, other.intensities)
            and np.array_equal(self.no_return, other.no_return)
        )


def glass_mask_like(scan: LaserScan, flags: Optional[Sequence[bool]] = None) -> np.ndarray:
    """Build a per-beam glass mask (all False by default) sized to ``scan``."""
    if flags is None:
        return np.zeros(len(scan), dtype=bool)
    mask = np.asarray(flags, dtype=bool)
    if mask.shape != (len(scan),):
        raise ValueError("glass mask length must equal the scan beam count")
    return mask
