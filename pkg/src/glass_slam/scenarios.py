"""Ready-made simulated worlds and trajectories."""

from __future__ import annotations

import math

import numpy as np

from .core_types import Pose2
from .lidar_simulator import DIFFUSE, GLASS, Environment, Trajectory


def _box(x0, y0, x1, y1):
    return [
        ((x0, y0), (x1, y0), DIFFUSE),
        ((x1, y0), (x1, y1), DIFFUSE),
        ((x1, y1), (x0, y1), DIFFUSE),
        ((x0, y1), (x0, y0), DIFFUSE),
    ]


def corridor_loop(glass: bool = True) -> Environment:
    """A 2 m wide corridor around a 10 x 6 m block; its centreline is a 12 x 8 m
    rectangle (40 m). The outer wall of the first straight holds a 10 m glass
    pane with a furnished room behind it. Small pillars break the symmetry of
    the other straights.
    """
    pane = GLASS if glass else DIFFUSE
    items = [
        # outer wall
        ((-1, -1), (1, -1), DIFFUSE),
        ((1, -1), (11, -1), pane),
        ((11, -1), (13, -1), DIFFUSE),
        ((13, -1), (13, 9), DIFFUSE),
        ((13, 9), (-1, 9), DIFFUSE),
        ((-1, 9), (-1, -1), DIFFUSE),
        # room behind the pane
        ((1, -1), (1, -4), DIFFUSE),
        ((1, -4), (11, -4), DIFFUSE),
        ((11, -4), (11, -1), DIFFUSE),
    ]
    items += _box(1, 1, 11, 7)  # inner block
    items += _box(3.0, -3.2, 4.2, -2.6)  # furniture in the room
    items += _box(7.5, -3.6, 8.1, -2.4)
    # pillars against the walls
    for x0, y0 in [(12.7, 2.3), (11.0, 4.9), (12.7, 6.1), (8.3, 8.7), (4.1, 7.0), (2.2, 8.7), (-1.0, 5.6), (0.7, 3.1), (-1.0, 1.7)]:
        items += _box(x0, y0, x0 + 0.3, y0 + 0.3)
    return Environment.from_list(items)


def corridor_loop_trajectory(laps: int = 2, step: float = 0.1, turn_step_deg: float = 10.0, dt: float = 0.1) -> Trajectory:
    """Counter-clockwise laps of the centreline, turning in place at corners."""
    corners = [(0.0, 0.0), (12.0, 0.0), (12.0, 8.0), (0.0, 8.0)]
    poses = [Pose2(0.0, 0.0, 0.0)]
    heading = 0.0
    for _ in range(laps):
        for k in range(4):
            (x0, y0), (x1, y1) = corners[k], corners[(k + 1) % 4]
            target = math.atan2(y1 - y0, x1 - x0)
            turn = math.remainder(target - heading, 2 * math.pi)
            n_turn = int(round(abs(math.degrees(turn)) / turn_step_deg))
            for i in range(1, n_turn + 1):
                poses.append(Pose2(x0, y0, heading + turn * i / n_turn))
            heading = target
            length = math.hypot(x1 - x0, y1 - y0)
            n = int(round(length / step))
            for i in range(1, n + 1):
                f = i / n
                poses.append(Pose2(x0 + f * (x1 - x0), y0 + f * (y1 - y0), heading))
    timestamps = np.arange(len(poses)) * dt
    return Trajectory(timestamps, tuple(poses))


def glass_panel(distance: float = 1.0, width: float = 0.4572) -> Environment:
    """A single glass sheet facing the origin at ``distance`` with a diffuse wall
    1 m behind it, like the bench calibration set-up."""
    h = width / 2
    return Environment.from_list(
        [
            ((distance, -h), (distance, h), GLASS),
            ((distance + 1.0, -3.0), (distance + 1.0, 3.0), DIFFUSE),
        ]
    )
