"""Local SLAM: scan-to-submap matching, glass detection and submap lifecycle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .core_types import LaserScan, Pose2, Transform2
from .glass_detector import DetectorParams, detect_glass
from .global_glass import GlassModeConfig, GlassPointRegistry, effective_miss_probability, seed_submap
from .occupancy_submap import GridParams, ProbabilityGrid, Submap, insert_scan


class ScanOrderError(ValueError):
    """A scan arrived with a timestamp not after its predecessor's."""


@dataclass(frozen=True)
class MatchParams:
    window_x: float = 0.3
    window_y: float = 0.3
    window_theta: float = math.radians(10.0)
    linear_step: float = 0.05
    angular_step: float = math.radians(0.5)
    refine: bool = True
    max_refine_iters: int = 10
    convergence_tol_linear: float = 1e-4
    convergence_tol_angular: float = 1e-4
    # pull toward the initial guess; keeps flat directions (corridors) on the prior
    translation_weight: float = 0.1
    rotation_weight: float = 0.1

    def __post_init__(self):
        if not (self.linear_step > 0 and self.angular_step > 0):
            raise ValueError("search steps must be positive")
        if self.window_x < self.linear_step or self.window_y < self.linear_step:
            raise ValueError("linear window must cover at least one step")
        if self.window_theta < self.angular_step:
            raise ValueError("angular window must cover at least one step")


def _lookup(prob: np.ndarray, offset, ix: np.ndarray, iy: np.ndarray) -> np.ndarray:
    li = ix - offset[0]
    lj = iy - offset[1]
    inside = (li >= 0) & (li < prob.shape[0]) & (lj >= 0) & (lj < prob.shape[1])
    values = prob[np.clip(li, 0, prob.shape[0] - 1), np.clip(lj, 0, prob.shape[1] - 1)]
    return np.where(inside, values, 0.0)


def _bilinear(prob: np.ndarray, offset, u: np.ndarray):
    """Interpolated probability and its gradient w.r.t. grid coordinates ``u`` (N, 2)."""
    v = u - 0.5
    base = np.floor(v)
    f = v - base
    i = base[:, 0].astype(np.int64)
    j = base[:, 1].astype(np.int64)
    p00 = _lookup(prob, offset, i, j)
    p10 = _lookup(prob, offset, i + 1, j)
    p01 = _lookup(prob, offset, i, j + 1)
    p11 = _lookup(prob, offset, i + 1, j + 1)
    fx, fy = f[:, 0], f[:, 1]
    value = p00 * (1 - fx) * (1 - fy) + p10 * fx * (1 - fy) + p01 * (1 - fx) * fy + p11 * fx * fy
    dx = (p10 - p00) * (1 - fy) + (p11 - p01) * fy
    dy = (p01 - p00) * (1 - fx) + (p11 - p10) * fx
    return value, np.column_stack((dx, dy))


def _mean_probability(grid: ProbabilityGrid, prob, offset, points: np.ndarray, pose: Pose2) -> float:
    cells = np.floor(grid.to_grid_units(pose.transform_points(points))).astype(np.int64)
    return float(_lookup(prob, offset, cells[:, 0], cells[:, 1]).mean())


def _prior_factor(dx, dy, dtheta, params: MatchParams):
    return np.exp(-(params.translation_weight * (dx**2 + dy**2) + params.rotation_weight * dtheta**2))


def match_scan(
    grid: ProbabilityGrid,
    scan: LaserScan,
    initial_guess: Pose2,
    params: MatchParams = MatchParams(),
) -> tuple[Pose2, float]:
    """Align ``scan`` to ``grid`` starting from ``initial_guess`` (submap frame).

    Exhaustive search over the window scores each candidate by the mean grid
    probability at beam endpoints, scaled by a mild prior toward the guess.
    The winner is optionally polished by damped Gauss-Newton on the
    bilinearly interpolated grid. Returns the pose and its mean endpoint
    probability; an empty grid returns the guess with score 0.
    """
    if len(grid) == 0:
        return initial_guess, 0.0
    points = scan.endpoints()[scan.valid]
    if points.shape[0] == 0:
        return initial_guess, 0.0
    prob, offset = grid.dense(unknown=0.0)

    nx = int(math.floor(params.window_x / params.linear_step + 1e-9))
    ny = int(math.floor(params.window_y / params.linear_step + 1e-9))
    nt = int(math.floor(params.window_theta / params.angular_step + 1e-9))
    kx = np.arange(-nx, nx + 1) * params.linear_step
    ky = np.arange(-ny, ny + 1) * params.linear_step
    kt = np.arange(-nt, nt + 1) * params.angular_step
    scale = 1.0 / grid.resolution

    # one-cell zero border: clipping an index onto it reads "outside the grid"
    padded = np.pad(prob, 1)
    width = padded.shape[1]
    flat_prob = padded.ravel()
    thetas = initial_guess.theta + kt
    c, s = np.cos(thetas)[:, None], np.sin(thetas)[:, None]
    wx = c * points[None, :, 0] - s * points[None, :, 1] + initial_guess.x
    wy = s * points[None, :, 0] + c * points[None, :, 1] + initial_guess.y
    if grid.origin != Transform2.identity():
        moved = grid.origin.apply_many(np.column_stack((wx.ravel(), wy.ravel())))
        wx, wy = moved[:, 0].reshape(wx.shape), moved[:, 1].reshape(wy.shape)
    ix = np.floor((wx[:, :, None] + kx) * scale).astype(np.int64) - offset[0] + 1
    iy = np.floor((wy[:, :, None] + ky) * scale).astype(np.int64) - offset[1] + 1
    np.clip(ix, 0, padded.shape[0] - 1, out=ix)
    np.clip(iy, 0, padded.shape[1] - 1, out=iy)
    values = flat_prob.take(ix[:, :, :, None] * width + iy[:, :, None, :])
    scores = values.mean(axis=1)
    scores *= _prior_factor(kx[None, :, None], ky[None, None, :], kt[:, None, None], params)
    a, b, d = np.unravel_index(int(np.argmax(scores)), scores.shape)
    best = (float(scores[a, b, d]), kx[b], ky[d], kt[a])

    _, bx, by, bt = best
    pose = Pose2(initial_guess.x + bx, initial_guess.y + by, initial_guess.theta + bt)
    if params.refine:
        pose = _refine(grid, prob, offset, points, pose, initial_guess, params)
    return pose, _mean_probability(grid, prob, offset, points, pose)


def _refine(grid, prob, offset, points, start: Pose2, guess: Pose2, params: MatchParams) -> Pose2:
    n = points.shape[0]
    w_t = math.sqrt(params.translation_weight)
    w_r = math.sqrt(params.rotation_weight)
    scale = 1.0 / grid.resolution
    rot = grid.origin.rotation
    cr, sr = math.cos(rot), math.sin(rot)

    def evaluate(x):
        theta = x[2]
        c, s = math.cos(theta), math.sin(theta)
        wx = c * points[:, 0] - s * points[:, 1] + x[0]
        wy = s * points[:, 0] + c * points[:, 1] + x[1]
        u = grid.to_grid_units(np.column_stack((wx, wy)))
        value, grad_u = _bilinear(prob, offset, u)
        # chain rule: grid units <- grid frame <- submap frame
        gx = (cr * grad_u[:, 0] + sr * grad_u[:, 1]) * scale
        gy = (-sr * grad_u[:, 0] + cr * grad_u[:, 1]) * scale
        dwx_dt = -s * points[:, 0] - c * points[:, 1]
        dwy_dt = c * points[:, 0] - s * points[:, 1]
        residual = np.concatenate(
            ((1.0 - value) / math.sqrt(n), [w_t * (x[0] - guess.x), w_t * (x[1] - guess.y), w_r * (x[2] - guess.theta)])
        )
        jac = np.zeros((n + 3, 3))
        jac[:n, 0] = -gx / math.sqrt(n)
        jac[:n, 1] = -gy / math.sqrt(n)
        jac[:n, 2] = -(gx * dwx_dt + gy * dwy_dt) / math.sqrt(n)
        jac[n, 0] = w_t
        jac[n + 1, 1] = w_t
        jac[n + 2, 2] = w_r
        return residual, jac

    guess_theta = guess.theta
    x = np.array([start.x, start.y, guess_theta + math.remainder(start.theta - guess_theta, 2 * math.pi)])
    r, jac = evaluate(x)
    cost = float(r @ r)
    damping = 1e-3
    for _ in range(params.max_refine_iters):
        h = jac.T @ jac
        g = jac.T @ r
        try:
            step = -np.linalg.solve(h + damping * np.diag(np.diag(h) + 1e-9), g)
        except np.linalg.LinAlgError:
            break
        candidate = x + step
        r_new, jac_new = evaluate(candidate)
        cost_new = float(r_new @ r_new)
        if cost_new < cost:
            x, r, jac, cost = candidate, r_new, jac_new, cost_new
            damping = max(damping / 10.0, 1e-9)
            if (
                math.hypot(step[0], step[1]) < params.convergence_tol_linear
                and abs(step[2]) < params.convergence_tol_angular
            ):
                break
        else:
            damping *= 10.0
            if damping > 1e6:
                break
    return Pose2(x[0], x[1], x[2])


# -- events --------------------------------------------------------------


@dataclass(frozen=True)
class SubmapCreated:
    submap: Submap


@dataclass(frozen=True)
class ScanInserted:
    scan_id: int
    scan: LaserScan
    pose: Pose2
    insertions: tuple  # ((submap_id, pose_in_submap), ...)
    glass_beams: int


@dataclass(frozen=True)
class SubmapFinished:
    submap: Submap


Event = Union[SubmapCreated, ScanInserted, SubmapFinished]


@dataclass
class FrontendState:
    active_submaps: list = field(default_factory=list)
    submaps: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)
    last_scan_pose: Optional[Pose2] = None
    last_timestamp: Optional[float] = None


class Frontend:
    """Sequential per-scan pipeline producing submaps and an event stream.

    Poses live in the local (uncorrected) frame. ``correction`` is the latest
    transform from that frame to the initial global frame, published by the
    back end; it is used to register glass points and to seed new submaps.
    """

    def __init__(
        self,
        detector: DetectorParams = DetectorParams(),
        grid: GridParams = GridParams(),
        match: MatchParams = MatchParams(),
        mode: GlassModeConfig = GlassModeConfig(),
        registry: Optional[GlassPointRegistry] = None,
    ):
        if grid.scans_per_submap != 1 and grid.scans_per_submap % 2:
            raise ValueError("the two-submap overlap needs an even scans_per_submap (or 1)")
        self.detector = detector
        self.mode = mode
        self.grid_params = grid.with_miss(effective_miss_probability(mode, grid))
        self.match_params = match
        self.registry = registry if registry is not None else GlassPointRegistry(grid.resolution)
        self.state = FrontendState()
        self.correction = Transform2.identity()

    def _new_submap(self, pose: Pose2) -> Submap:
        res = self.grid_params.resolution
        # submaps are axis-aligned in the local frame, origins on the cell lattice
        origin = Pose2(round(pose.x / res) * res, round(pose.y / res) * res, 0.0)
        submap = Submap.create(len(self.state.submaps), origin, self.grid_params)
        if self.mode.seeding_enabled:
            seed_submap(submap, self.registry, self.correction, self.grid_params, self.mode.seed_half_span)
        self.state.submaps.append(submap)
        self.state.active_submaps.append(submap)
        return submap

    def process_scan(self, scan: LaserScan, odometry_delta: Optional[Pose2] = None) -> list:
        state = self.state
        if state.last_timestamp is not None and not scan.timestamp > state.last_timestamp:
            raise ScanOrderError(
                f"scan at t={scan.timestamp} does not follow t={state.last_timestamp}"
            )
        events: list = []
        if state.last_scan_pose is None:
            guess = Pose2.identity()
            events.append(SubmapCreated(self._new_submap(guess)))
            pose = guess
        else:
            delta = odometry_delta if odometry_delta is not None else Pose2.identity()
            guess = state.last_scan_pose.compose(delta)
            target = state.active_submaps[0]
            local_guess = guess.relative_to(target.global_pose)
            matched, _ = match_scan(target.grid, scan, local_guess, self.match_params)
            pose = target.global_pose.compose(matched)

        if self.mode.detection_enabled and len(scan) >= 2:
            mask = detect_glass(scan, self.detector)
        else:
            mask = np.zeros(len(scan), dtype=bool)

        scan_id = len(state.trajectory)
        insertions = []
        for k, submap in enumerate(list(state.active_submaps)):
            pose_in_submap = pose.relative_to(submap.global_pose)
            insert_scan(
                submap,
                scan,
                mask,
                pose_in_submap,
                registry=self.registry if k == 0 else None,
                h_k=self.correction,
                params=self.grid_params,
            )
            submap.scan_ids.append(scan_id)
            insertions.append((submap.id, pose_in_submap))
        state.trajectory.append((scan.timestamp, pose))
        state.last_scan_pose = pose
        state.last_timestamp = scan.timestamp
        events.append(ScanInserted(scan_id, scan, pose, tuple(insertions), int(mask.sum())))

        half = max(1, self.grid_params.scans_per_submap // 2)
        newest = state.active_submaps[-1]
        oldest = state.active_submaps[0]
        if oldest.finished:
            state.active_submaps.pop(0)
            events.append(SubmapFinished(oldest))
        if newest.insertion_count == half:
            events.append(SubmapCreated(self._new_submap(pose)))
        return events
