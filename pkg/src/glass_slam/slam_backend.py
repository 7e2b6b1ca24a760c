"""Pose graph over scans and submaps, loop-closure search and optimization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core_types import LaserScan, Pose2, Transform2, normalize_angles
from .occupancy_submap import Submap
from .slam_frontend import MatchParams, ScanInserted, SubmapCreated, SubmapFinished, match_scan


class GraphError(ValueError):
    pass


def information(sigma_xy: float, sigma_theta: float) -> np.ndarray:
    return np.array([1.0 / sigma_xy**2, 1.0 / sigma_xy**2, 1.0 / sigma_theta**2])


INTRA_WEIGHTS = information(0.05, math.radians(1.0))
LOOP_WEIGHTS = information(0.1, math.radians(2.0))


@dataclass(frozen=True)
class Constraint:
    i: Hashable
    j: Hashable
    measurement: Pose2  # pose of j expressed in the frame of i
    weights: np.ndarray = field(default_factory=lambda: INTRA_WEIGHTS.copy())
    kind: str = "intra"


class PoseGraph:
    """Nodes keyed ``("submap", id)`` / ``("scan", id)``; the first node added is the gauge."""

    def __init__(self):
        self.keys: list = []
        self.index: dict = {}
        self._poses: list = []
        self.constraints: list[Constraint] = []

    def __contains__(self, key) -> bool:
        return key in self.index

    def __len__(self) -> int:
        return len(self.keys)

    def add_node(self, key, pose: Pose2) -> None:
        if key in self.index:
            raise GraphError(f"node {key!r} already exists")
        self.index[key] = len(self.keys)
        self.keys.append(key)
        self._poses.append(pose.as_array())

    def pose(self, key) -> Pose2:
        return Pose2(*self._poses[self.index[key]])

    def set_pose(self, key, pose: Pose2) -> None:
        self._poses[self.index[key]] = pose.as_array()

    def poses_array(self) -> np.ndarray:
        return np.array(self._poses, dtype=float).reshape(-1, 3)

    def set_poses_array(self, poses: np.ndarray) -> None:
        self._poses = [np.array(p, dtype=float) for p in poses]

    def add_constraint(self, constraint: Constraint) -> None:
        for key in (constraint.i, constraint.j):
            if key not in self.index:
                raise GraphError(f"constraint references unknown node {key!r}")
        self.constraints.append(constraint)

    def components(self) -> list[list]:
        parent = list(range(len(self.keys)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for c in self.constraints:
            ra, rb = find(self.index[c.i]), find(self.index[c.j])
            if ra != rb:
                parent[rb] = ra
        groups: dict = {}
        for k, key in enumerate(self.keys):
            groups.setdefault(find(k), []).append(key)
        return sorted(groups.values(), key=lambda g: self.index[g[0]])


def add_intra_constraints(
    graph: PoseGraph,
    submap_key,
    scan_key,
    submap_pose: Pose2,
    scan_pose: Pose2,
    weights: np.ndarray = INTRA_WEIGHTS,
    kind: str = "intra",
) -> Constraint:
    """Append the constraint submap_pose^-1 o scan_pose between two existing nodes."""
    constraint = Constraint(submap_key, scan_key, scan_pose.relative_to(submap_pose), np.asarray(weights, float), kind)
    graph.add_constraint(constraint)
    return constraint


# -- residuals -----------------------------------------------------------


def _constraint_arrays(graph: PoseGraph):
    m = len(graph.constraints)
    ii = np.empty(m, dtype=np.int64)
    jj = np.empty(m, dtype=np.int64)
    z = np.empty((m, 3))
    w = np.empty((m, 3))
    for k, c in enumerate(graph.constraints):
        ii[k] = graph.index[c.i]
        jj[k] = graph.index[c.j]
        z[k] = c.measurement.as_array()
        w[k] = c.weights
    return ii, jj, z, np.sqrt(w)


def residuals(poses: np.ndarray, ii, jj, z, sqrt_w) -> np.ndarray:
    """Whitened residuals (M, 3): R_i^T (t_j - t_i) - z_xy and wrapped angle error."""
    pi, pj = poses[ii], poses[jj]
    c, s = np.cos(pi[:, 2]), np.sin(pi[:, 2])
    dx = pj[:, 0] - pi[:, 0]
    dy = pj[:, 1] - pi[:, 1]
    ex = c * dx + s * dy - z[:, 0]
    ey = -s * dx + c * dy - z[:, 1]
    et = normalize_angles(pj[:, 2] - pi[:, 2] - z[:, 2])
    return np.column_stack((ex, ey, et)) * sqrt_w


def jacobian_blocks(poses: np.ndarray, ii, jj, sqrt_w):
    """Analytic d(residual)/d(pose_i) and d(residual)/d(pose_j), each (M, 3, 3)."""
    pi, pj = poses[ii], poses[jj]
    c, s = np.cos(pi[:, 2]), np.sin(pi[:, 2])
    dx = pj[:, 0] - pi[:, 0]
    dy = pj[:, 1] - pi[:, 1]
    m = len(ii)
    ji = np.zeros((m, 3, 3))
    jj_ = np.zeros((m, 3, 3))
    ji[:, 0, 0], ji[:, 0, 1], ji[:, 0, 2] = -c, -s, -s * dx + c * dy
    ji[:, 1, 0], ji[:, 1, 1], ji[:, 1, 2] = s, -c, -c * dx - s * dy
    ji[:, 2, 2] = -1.0
    jj_[:, 0, 0], jj_[:, 0, 1] = c, s
    jj_[:, 1, 0], jj_[:, 1, 1] = -s, c
    jj_[:, 2, 2] = 1.0
    return ji * sqrt_w[:, :, None], jj_ * sqrt_w[:, :, None]


def graph_cost(graph: PoseGraph, poses: Optional[np.ndarray] = None) -> float:
    if not graph.constraints:
        return 0.0
    arrays = _constraint_arrays(graph)
    r = residuals(graph.poses_array() if poses is None else poses, *arrays)
    return float(np.sum(r * r))


@dataclass
class OptimizationResult:
    poses: dict
    initial_cost: float
    final_cost: float
    iterations: int
    cost_history: list


def optimize(
    graph: PoseGraph,
    max_iterations: int = 50,
    tolerance: float = 1e-6,
) -> OptimizationResult:
    """Damped Gauss-Newton on the weighted pose residuals, first node held fixed.

    Steps are accepted only when they lower the cost; iteration stops when
    the decrease falls below ``tolerance`` or after ``max_iterations``. The
    graph is updated in place and the new poses are returned by key.
    """
    comps = graph.components()
    if len(comps) > 1:
        stray = comps[1]
        raise GraphError(f"pose graph is disconnected; component not linked to {graph.keys[0]!r}: {stray!r}")
    poses = graph.poses_array()
    n = poses.shape[0]
    if n <= 1 or not graph.constraints:
        cost = graph_cost(graph)
        return OptimizationResult({k: graph.pose(k) for k in graph.keys}, cost, cost, 0, [cost])

    ii, jj, z, sqrt_w = _constraint_arrays(graph)
    m = len(ii)
    r = residuals(poses, ii, jj, z, sqrt_w).ravel()
    cost = float(r @ r)
    history = [cost]
    initial_cost = cost
    damping = 1e-4
    rows = np.repeat(np.arange(3 * m).reshape(m, 3), 3, axis=1)  # (m, 9)
    iterations = 0
    free = np.arange(3, 3 * n)
    for iterations in range(1, max_iterations + 1):
        ji, jjb = jacobian_blocks(poses, ii, jj, sqrt_w)
        cols_i = (3 * ii[:, None] + np.arange(3)[None, :])
        cols_j = (3 * jj[:, None] + np.arange(3)[None, :])
        data = np.concatenate((ji.reshape(m, 9), jjb.reshape(m, 9)), axis=1).ravel()
        row_idx = np.concatenate((rows, rows), axis=1).ravel()
        col_idx = np.concatenate((np.tile(cols_i, (1, 3)), np.tile(cols_j, (1, 3))), axis=1).ravel()
        jac = sp.csr_matrix((data, (row_idx, col_idx)), shape=(3 * m, 3 * n))[:, free]
        h = (jac.T @ jac).tocsc()
        g = jac.T @ r
        diag = h.diagonal()
        improved = False
        while damping < 1e8:
            lhs = h + sp.diags(damping * (diag + 1e-12))
            step = -spla.spsolve(lhs.tocsc(), g)
            candidate = poses.copy()
            candidate[1:] += step.reshape(-1, 3)
            candidate[:, 2] = normalize_angles(candidate[:, 2])
            r_new = residuals(candidate, ii, jj, z, sqrt_w).ravel()
            cost_new = float(r_new @ r_new)
            if cost_new <= cost:
                improved = True
                break
            damping *= 10.0
        if not improved:
            break
        decrease = cost - cost_new
        poses, r, cost = candidate, r_new, cost_new
        history.append(cost)
        damping = max(damping / 10.0, 1e-10)
        if decrease < tolerance:
            break
    graph.set_poses_array(poses)
    return OptimizationResult({k: graph.pose(k) for k in graph.keys}, initial_cost, cost, iterations, history)


# -- loop closure --------------------------------------------------------


@dataclass(frozen=True)
class LoopClosureParams:
    search_window: tuple = (0.6, 0.6, math.radians(8.0))
    linear_step: float = 0.1
    angular_step: float = math.radians(1.0)
    min_score: float = 0.6
    sampling_ratio: float = 0.1
    max_distance: float = 6.0
    # scans closer than this (in scan count) to a submap's own scans are skipped
    min_scan_gap: int = 90

    def __post_init__(self):
        if not 0.0 < self.min_score <= 1.0:
            raise ValueError("min_score must lie in (0, 1]")
        if not 0.0 < self.sampling_ratio <= 1.0:
            raise ValueError("sampling_ratio must lie in (0, 1]")

    def match_params(self) -> MatchParams:
        wx, wy, wt = self.search_window
        return MatchParams(
            window_x=wx,
            window_y=wy,
            window_theta=wt,
            linear_step=self.linear_step,
            angular_step=self.angular_step,
            refine=True,
            translation_weight=0.0,
            rotation_weight=0.0,
        )


class FixedRatioSampler:
    """Deterministically passes a fixed fraction of the candidates it sees."""

    def __init__(self, ratio: float):
        self.ratio = ratio
        self.seen = 0
        self.passed = 0

    def pulse(self) -> bool:
        self.seen += 1
        if self.passed < self.ratio * self.seen:
            self.passed += 1
            return True
        return False


def find_loop_closures(
    graph: PoseGraph,
    finished_submaps: Iterable[Submap],
    scans: dict,
    params: LoopClosureParams = LoopClosureParams(),
    tested: Optional[set] = None,
    sampler: Optional[FixedRatioSampler] = None,
) -> list[Constraint]:
    """Match sampled scans against finished submaps they were not inserted into.

    ``scans`` maps scan id -> LaserScan. Pairs already in ``tested`` are
    skipped and new pairs are added to it. Matches reaching ``min_score``
    become loop-closure constraints; they are returned, not added.
    """
    tested = set() if tested is None else tested
    sampler = sampler or FixedRatioSampler(params.sampling_ratio)
    match_params = params.match_params()
    wx, wy, wt = params.search_window
    scan_ids = np.array(sorted(k for k in scans if ("scan", k) in graph), dtype=np.int64)
    if scan_ids.size == 0:
        return []
    all_poses = graph.poses_array()
    scan_xy = all_poses[[graph.index[("scan", int(k))] for k in scan_ids], :2]
    found = []
    for submap in finished_submaps:
        skey = ("submap", submap.id)
        if skey not in graph or not submap.scan_ids:
            continue
        lo, hi = min(submap.scan_ids), max(submap.scan_ids)
        submap_pose = graph.pose(skey)
        near = np.hypot(scan_xy[:, 0] - submap_pose.x, scan_xy[:, 1] - submap_pose.y) <= params.max_distance
        far_in_time = (scan_ids < lo - params.min_scan_gap) | (scan_ids > hi + params.min_scan_gap)
        for scan_id in scan_ids[near & far_in_time].tolist():
            pair = (scan_id, submap.id)
            if pair in tested:
                continue
            tested.add(pair)
            if not sampler.pulse():
                continue
            key = ("scan", scan_id)
            relative = graph.pose(key).relative_to(submap_pose)
            matched, score = match_scan(submap.grid, scans[scan_id], relative, match_params)
            if score < params.min_score:
                continue
            shift = matched.relative_to(relative)
            if abs(shift.x) > wx + 1e-9 or abs(shift.y) > wy + 1e-9 or abs(shift.theta) > wt + 1e-9:
                continue
            found.append(Constraint(skey, key, matched, LOOP_WEIGHTS.copy(), "loop"))
    return found


class Backend:
    """Consumes front-end events, keeps the pose graph and publishes corrections.

    ``correction(k)`` is the transform taking local (front-end) coordinates
    around submap k to the optimized frame, which is anchored at submap 0.
    """

    def __init__(
        self,
        loop: LoopClosureParams = LoopClosureParams(),
        intra_weights: np.ndarray = INTRA_WEIGHTS,
        optimize_every: int = 1,
        loop_closure: bool = True,
    ):
        self.loop_params = loop
        self.intra_weights = np.asarray(intra_weights, float)
        self.optimize_every = optimize_every
        self.loop_closure = loop_closure
        self.graph = PoseGraph()
        self.submaps: dict = {}
        self.local_submap_poses: dict = {}
        self.local_scan_poses: dict = {}
        self.timestamps: dict = {}
        self.scans: dict = {}
        self.finished: list = []
        self.loop_constraints: list = []
        self.corrections: dict = {}
        self._tested: set = set()
        self._sampler = FixedRatioSampler(loop.sampling_ratio)
        self._since_optimize = 0
        self.optimizations = 0

    def latest_correction(self) -> Transform2:
        if not self.submaps:
            return Transform2.identity()
        return self.correction(max(self.submaps))

    def correction(self, submap_id: int) -> Transform2:
        return self.corrections.get(submap_id, self._fallback_correction(submap_id))

    def _fallback_correction(self, submap_id: int) -> Transform2:
        earlier = [k for k in self.corrections if k <= submap_id]
        return self.corrections[max(earlier)] if earlier else Transform2.identity()

    def handle(self, event) -> bool:
        """Apply one event; returns True when an optimization ran."""
        if isinstance(event, SubmapCreated):
            submap = event.submap
            local = submap.global_pose
            self.submaps[submap.id] = submap
            self.local_submap_poses[submap.id] = local
            self.corrections.setdefault(submap.id, self.latest_correction())
            return False
        if isinstance(event, ScanInserted):
            # a submap joins the graph with its first scan, so it is never isolated
            for submap_id, _ in event.insertions:
                if ("submap", submap_id) not in self.graph:
                    self.graph.add_node(("submap", submap_id), self._corrected_submap_pose(submap_id))
            corr = self.latest_correction()
            self.graph.add_node(("scan", event.scan_id), Pose2.from_transform(corr.compose(event.pose.as_transform())))
            self.local_scan_poses[event.scan_id] = event.pose
            self.timestamps[event.scan_id] = event.scan.timestamp
            self.scans[event.scan_id] = event.scan
            for submap_id, pose_in_submap in event.insertions:
                self.graph.add_constraint(
                    Constraint(("submap", submap_id), ("scan", event.scan_id), pose_in_submap, self.intra_weights.copy())
                )
            return False
        if isinstance(event, SubmapFinished):
            self.finished.append(event.submap)
            self._since_optimize += 1
            if self._since_optimize >= self.optimize_every:
                self.run_optimization()
                return True
            return False
        raise TypeError(f"unknown event {event!r}")

    def search_loop_closures(self) -> list:
        if not self.loop_closure or not self.finished:
            return []
        found = find_loop_closures(
            self.graph, self.finished, self.scans, self.loop_params, self._tested, self._sampler
        )
        for c in found:
            self.graph.add_constraint(c)
        self.loop_constraints.extend(found)
        return found

    def run_optimization(self) -> OptimizationResult:
        self.search_loop_closures()
        result = optimize(self.graph)
        self._since_optimize = 0
        self.optimizations += 1
        for submap_id, local in self.local_submap_poses.items():
            if ("submap", submap_id) not in self.graph:
                continue
            after = self.graph.pose(("submap", submap_id)).as_transform()
            self.corrections[submap_id] = after.compose(local.as_transform().inverse())
        return result

    def _corrected_submap_pose(self, submap_id: int) -> Pose2:
        local = self.local_submap_poses[submap_id]
        return Pose2.from_transform(self.correction(submap_id).compose(local.as_transform()))

    def submap_poses(self) -> dict:
        poses = {}
        for k in sorted(self.submaps):
            key = ("submap", k)
            poses[k] = self.graph.pose(key) if key in self.graph else self._corrected_submap_pose(k)
        return poses

    def trajectory(self) -> list:
        return [(self.timestamps[k], self.graph.pose(("scan", k))) for k in sorted(self.local_scan_poses)]

    def local_trajectory(self) -> list:
        return [(self.timestamps[k], self.local_scan_poses[k]) for k in sorted(self.local_scan_poses)]
