"""Glass-coverage scoring of exported maps and trajectory error after alignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .core_types import Pose2, normalize_angles
from .lidar_simulator import Environment
from .map_export import OccupancyMap


class EvaluationError(ValueError):
    pass


@dataclass
class SegmentCoverage:
    index: int
    length: float
    detected: float


@dataclass
class GlassCoverageReport:
    ground_truth_length: float
    detected_length: float
    segments: list = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return 100.0 * self.detected_length / self.ground_truth_length

    def as_text(self) -> str:
        lines = [
            f"glass length (m):    {self.ground_truth_length:.2f}",
            f"detected glass (m):  {self.detected_length:.2f}",
            f"glass accuracy (%):  {self.accuracy:.1f}",
        ]
        for s in self.segments:
            lines.append(f"  segment {s.index}: {s.detected:.2f} / {s.length:.2f} m")
        return "\n".join(lines) + "\n"

    def as_key_values(self) -> str:
        out = [
            f"ground_truth_length={self.ground_truth_length!r}",
            f"detected_length={self.detected_length!r}",
            f"accuracy={self.accuracy!r}",
        ]
        for s in self.segments:
            out.append(f"segment.{s.index}.length={s.length!r}")
            out.append(f"segment.{s.index}.detected={s.detected!r}")
        return "\n".join(out) + "\n"


def glass_coverage(
    occupancy: OccupancyMap,
    env: Environment,
    corridor: Optional[float] = None,
    map_to_env: Pose2 = Pose2(),
) -> GlassCoverageReport:
    """Length of each glass segment that has an occupied map cell within ``corridor``.

    Segments are cut into pieces of about one map resolution; a piece counts
    when an occupied pixel centre lies within ``corridor`` (default two
    cells) of its midpoint. ``map_to_env`` carries map coordinates into the
    environment frame.
    """
    glass = env.glass_segments()
    if glass.shape[0] == 0:
        raise EvaluationError("no ground truth")
    if corridor is None:
        corridor = 2.0 * occupancy.resolution
    occupied = map_to_env.transform_points(occupancy.occupied_points())
    tree = cKDTree(occupied) if occupied.shape[0] else None
    segments = []
    for k, (x1, y1, x2, y2) in enumerate(glass):
        length = math.hypot(x2 - x1, y2 - y1)
        n = max(1, int(round(length / occupancy.resolution)))
        f = (np.arange(n) + 0.5) / n
        samples = np.column_stack((x1 + f * (x2 - x1), y1 + f * (y2 - y1)))
        if tree is None:
            hits = 0
        else:
            dist, _ = tree.query(samples, k=1, distance_upper_bound=corridor + 1e-12)
            hits = int(np.count_nonzero(dist <= corridor))
        segments.append(SegmentCoverage(k, length, hits * length / n))
    return GlassCoverageReport(
        sum(s.length for s in segments), sum(s.detected for s in segments), segments
    )


def align_rigid_2d(estimate: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rotation R and translation t with truth ~ R @ estimate + t (no scale)."""
    mu_e = estimate.mean(axis=0)
    mu_t = truth.mean(axis=0)
    cov = (truth - mu_t).T @ (estimate - mu_e) / estimate.shape[0]
    u, _, vt = np.linalg.svd(cov)
    s = np.eye(2)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[1, 1] = -1.0
    rot = u @ s @ vt
    return rot, mu_t - rot @ mu_e


def trajectory_error(
    estimated: Sequence, truth: Sequence, time_tolerance: float = 1e-6
) -> tuple[float, float]:
    """Translation RMSE (m) and rotation RMSE (rad) after rigid alignment.

    Both inputs are sequences of (timestamp, Pose2) with matching timestamps.
    """
    if len(estimated) != len(truth):
        raise EvaluationError(f"trajectory lengths differ: {len(estimated)} vs {len(truth)}")
    if not estimated:
        raise EvaluationError("empty trajectory")
    t_est = np.array([t for t, _ in estimated], dtype=float)
    t_true = np.array([t for t, _ in truth], dtype=float)
    if np.any(np.abs(t_est - t_true) > time_tolerance):
        k = int(np.argmax(np.abs(t_est - t_true) > time_tolerance))
        raise EvaluationError(f"timestamp mismatch at pose {k}: {t_est[k]} vs {t_true[k]}")
    est = np.array([p.as_array() for _, p in estimated])
    ref = np.array([p.as_array() for _, p in truth])
    if len(est) == 1:
        rot, trans = np.eye(2), ref[0, :2] - est[0, :2]
    else:
        rot, trans = align_rigid_2d(est[:, :2], ref[:, :2])
    aligned = est[:, :2] @ rot.T + trans
    dtheta = math.atan2(rot[1, 0], rot[0, 0])
    if len(est) == 1:
        dtheta = float(normalize_angles(ref[0, 2] - est[0, 2]))
    t_err = np.sum((aligned - ref[:, :2]) ** 2, axis=1)
    r_err = normalize_angles(est[:, 2] + dtheta - ref[:, 2])
    return float(np.sqrt(t_err.mean())), float(np.sqrt(np.mean(r_err**2)))
