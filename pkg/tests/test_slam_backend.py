import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glass_slam.core_types import LaserScan, Pose2, Transform2
from glass_slam.occupancy_submap import GridParams, Submap
from glass_slam.slam_backend import (
    INTRA_WEIGHTS,
    LOOP_WEIGHTS,
    Backend,
    Constraint,
    FixedRatioSampler,
    GraphError,
    LoopClosureParams,
    PoseGraph,
    _constraint_arrays,
    add_intra_constraints,
    find_loop_closures,
    graph_cost,
    information,
    jacobian_blocks,
    optimize,
    residuals,
)
from glass_slam.slam_frontend import ScanInserted, SubmapCreated, SubmapFinished
from oracles import dense_pose_graph_solve


def test_weights():
    assert INTRA_WEIGHTS == pytest.approx([400.0, 400.0, 1 / math.radians(1) ** 2])
    assert LOOP_WEIGHTS == pytest.approx(information(0.1, math.radians(2)))


def two_nodes(a, b):
    g = PoseGraph()
    g.add_node("s", a)
    g.add_node("x", b)
    return g


def test_intra_examples():
    g = two_nodes(Pose2(), Pose2(1, 0, 0))
    c = add_intra_constraints(g, "s", "x", Pose2(), Pose2(1, 0, 0))
    assert c.measurement.as_array() == pytest.approx([1, 0, 0])
    sp, xp = Pose2(0, 0, math.pi / 2), Pose2(0, 1, math.pi / 2)
    g = two_nodes(sp, xp)
    c = add_intra_constraints(g, "s", "x", sp, xp)
    assert c.measurement.as_array() == pytest.approx([1, 0, 0], abs=1e-12)


def test_duplicate_constraints_kept():
    g = two_nodes(Pose2(), Pose2(1, 0, 0))
    add_intra_constraints(g, "s", "x", Pose2(), Pose2(1, 0, 0))
    add_intra_constraints(g, "s", "x", Pose2(), Pose2(1, 0, 0))
    assert len(g.constraints) == 2


def test_unknown_node_rejected():
    g = two_nodes(Pose2(), Pose2(1, 0, 0))
    with pytest.raises(GraphError):
        add_intra_constraints(g, "s", "nope", Pose2(), Pose2())


def random_graph(rng, n=None):
    n = n or int(rng.integers(2, 8))
    g = PoseGraph()
    for k in range(n):
        g.add_node(k, Pose2(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi)))
    for k in range(1, n):
        z = Pose2(*rng.uniform(-2, 2, 2), rng.uniform(-1, 1))
        g.add_constraint(Constraint(int(rng.integers(0, k)), k, z, rng.uniform(0.5, 50, 3)))
    for _ in range(int(rng.integers(0, 4))):
        i, j = rng.choice(n, 2, replace=False)
        z = Pose2(*rng.uniform(-2, 2, 2), rng.uniform(-1, 1))
        g.add_constraint(Constraint(int(i), int(j), z, rng.uniform(0.5, 50, 3)))
    return g


def finite_difference_jacobian(g, h=1e-6):
    ii, jj, z, sw = _constraint_arrays(g)
    x = g.poses_array()
    m, n = len(ii), len(x)
    jac = np.zeros((3 * m, 3 * n))
    for k in range(3 * n):
        xp, xm = x.copy(), x.copy()
        xp.flat[k] += h
        xm.flat[k] -= h
        rp = residuals(xp, ii, jj, z, sw)
        rm = residuals(xm, ii, jj, z, sw)
        d = rp - rm
        d[:, 2] = np.remainder(d[:, 2] + math.pi * np.sqrt(sw[:, 2]), 2 * math.pi * np.sqrt(sw[:, 2])) - math.pi * np.sqrt(sw[:, 2])
        jac[:, k] = (d / (2 * h)).ravel()
    return jac


def analytic_jacobian(g):
    ii, jj, z, sw = _constraint_arrays(g)
    x = g.poses_array()
    ji, jjb = jacobian_blocks(x, ii, jj, sw)
    jac = np.zeros((3 * len(ii), 3 * len(x)))
    for k, (i, j) in enumerate(zip(ii, jj)):
        jac[3 * k:3 * k + 3, 3 * i:3 * i + 3] += ji[k]
        jac[3 * k:3 * k + 3, 3 * j:3 * j + 3] += jjb[k]
    return jac


def jacobian_relative_error(g):
    a = analytic_jacobian(g)
    f = finite_difference_jacobian(g)
    return np.max(np.abs(a - f)) / max(np.max(np.abs(a)), 1e-12)


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(11)
    worst = max(jacobian_relative_error(random_graph(rng)) for _ in range(100))
    assert worst < 1e-4


def triangle(perturb=0.1):
    g = PoseGraph()
    g.add_node("a", Pose2(0, 0, 0))
    g.add_node("b", Pose2(1, 0, math.pi / 2))
    g.add_node("c", Pose2(1, 1, math.pi))
    w = np.array([10.0, 10.0, 100.0])
    g.add_constraint(Constraint("a", "b", Pose2(1, 0, math.pi / 2), w))
    g.add_constraint(Constraint("b", "c", Pose2(1, 0, math.pi / 2), w))
    g.add_constraint(Constraint("c", "a", Pose2(1 + perturb, 1 - perturb, math.pi + perturb), w))
    return g


def test_consistent_graph_unchanged():
    g = triangle(perturb=0.0)
    before = g.poses_array().copy()
    res = optimize(g)
    assert res.final_cost < 1e-20
    assert np.allclose(g.poses_array(), before, atol=1e-9)


def test_triangle_matches_dense_oracle():
    g = triangle(0.1)
    cons = [(g.index[c.i], g.index[c.j], c.measurement.as_array(), c.weights) for c in g.constraints]
    expected = dense_pose_graph_solve(g.poses_array(), cons)
    res = optimize(g, max_iterations=200, tolerance=1e-15)
    assert res.final_cost < res.initial_cost
    got = g.poses_array()
    got[:, 2] = np.remainder(got[:, 2] - expected[:, 2] + math.pi, 2 * math.pi) + expected[:, 2] - math.pi
    assert np.allclose(got, expected, atol=1e-6)


def test_single_node():
    g = PoseGraph()
    g.add_node(0, Pose2(1, 2, 3))
    res = optimize(g)
    assert res.iterations == 0 and g.pose(0) == Pose2(1, 2, 3)


def test_disconnected_graph_named():
    g = triangle()
    g.add_node("lonely", Pose2())
    g.add_node("friend", Pose2())
    g.add_constraint(Constraint("lonely", "friend", Pose2(), np.ones(3)))
    with pytest.raises(GraphError, match="lonely"):
        optimize(g)


@given(st.integers(0, 10_000))
def test_cost_history_monotone(seed):
    g = random_graph(np.random.default_rng(seed))
    res = optimize(g)
    hist = np.array(res.cost_history)
    assert np.all(np.diff(hist) <= 1e-12 * max(hist[0], 1.0))
    assert res.final_cost == pytest.approx(graph_cost(g))


@given(st.integers(0, 10_000), st.floats(-math.pi, math.pi), st.floats(-5, 5), st.floats(-5, 5))
def test_gauge_invariance(seed, th, tx, ty):
    rng = np.random.default_rng(seed)
    g1 = random_graph(rng, n=5)
    g2 = PoseGraph()
    t = Transform2(th, tx, ty)
    for k in g1.keys:
        g2.add_node(k, Pose2.from_transform(t.compose(g1.pose(k).as_transform())))
    for c in g1.constraints:
        g2.add_constraint(c)
    optimize(g1, tolerance=1e-14, max_iterations=200)
    optimize(g2, tolerance=1e-14, max_iterations=200)
    for k in g1.keys:
        a = Pose2.from_transform(t.compose(g1.pose(k).as_transform())).as_array()
        b = g2.pose(k).as_array()
        assert np.allclose(a[:2], b[:2], atol=1e-5)
        assert abs(math.remainder(a[2] - b[2], 2 * math.pi)) < 1e-5


def test_sampler_ratio():
    s = FixedRatioSampler(0.25)
    picks = [s.pulse() for _ in range(100)]
    assert sum(picks) == 25 and picks[0]


def test_loop_params_validation():
    with pytest.raises(ValueError):
        LoopClosureParams(min_score=0.0)
    with pytest.raises(ValueError):
        LoopClosureParams(sampling_ratio=1.5)


def test_no_finished_submaps_no_closures():
    g = PoseGraph()
    g.add_node(("scan", 0), Pose2())
    scan = LaserScan(np.array([0.0]), np.array([1.0]), np.array([0.0]), 5.0)
    assert find_loop_closures(g, [], {0: scan}) == []


def test_backend_correction_is_after_times_before_inverse():
    be = Backend(loop_closure=False)
    params = GridParams(scans_per_submap=2)
    s0 = Submap.create(0, Pose2(), params)
    s1 = Submap.create(1, Pose2(1.0, 0.0, 0.0), params)
    scan = LaserScan(np.array([0.0]), np.array([1.0]), np.array([0.0]), 5.0)
    be.handle(SubmapCreated(s0))
    be.handle(SubmapCreated(s1))
    # the scan claims to sit at x=1 in submap 0 but x=0.5 in submap 1
    be.handle(ScanInserted(0, scan, Pose2(1.0, 0.0, 0.0), ((0, Pose2(1.0, 0, 0)), (1, Pose2(-0.5, 0, 0))), 0))
    assert be.handle(SubmapFinished(s0))
    after = be.graph.pose(("submap", 1)).as_transform()
    h1 = be.correction(1)
    assert h1.apply((1.0, 0.0)) == pytest.approx(after.apply((0.0, 0.0)))
    assert be.graph.pose(("submap", 0)) == Pose2()
    assert after.tx == pytest.approx(1.5)


def test_empty_trailing_submap_stays_out_of_graph():
    from glass_slam.pipeline import records_from_playback, run_slam
    from glass_slam.config import PipelineConfig, apply_overrides
    from glass_slam.lidar_simulator import LidarSpec, playback
    from glass_slam.scenarios import corridor_loop, corridor_loop_trajectory

    traj = corridor_loop_trajectory(laps=1, step=0.5)
    traj = type(traj)(traj.timestamps[:4], traj.poses[:4])
    recs = records_from_playback(playback(corridor_loop(), traj, LidarSpec(beam_count=90), seed=1))
    cfg = apply_overrides(PipelineConfig(), {"grid.scans_per_submap": 4})
    result = run_slam(recs, cfg)
    backend = result.backend
    assert backend.graph.keys[0] == ("submap", 0)
    trailing = max(backend.submaps)
    assert backend.submaps[trailing].insertion_count == 0
    assert ("submap", trailing) not in backend.graph
    assert trailing in backend.submap_poses()
