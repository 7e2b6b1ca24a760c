import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glass_slam.core_types import (
    LaserScan,
    Pose2,
    Transform2,
    apply,
    compose,
    glass_mask_like,
    inverse,
    normalize_angle,
)

coord = st.floats(-50, 50, allow_nan=False)
angle = st.floats(-10, 10, allow_nan=False)
transforms = st.builds(Transform2, angle, coord, coord)
points = st.tuples(coord, coord)


def close(a: Transform2, b: Transform2, tol=1e-9):
    return (
        abs(normalize_angle(a.rotation - b.rotation)) < tol
        and abs(a.tx - b.tx) < tol
        and abs(a.ty - b.ty) < tol
    )


def test_compose_identities():
    ident = Transform2.identity()
    assert close(compose(ident, ident), ident)
    t = Transform2(0.7, 1.5, -2.0)
    assert close(compose(t, inverse(t)), ident)


def test_compose_hand_example():
    a = Transform2(math.pi / 2, 1.0, 0.0)
    b = Transform2(0.0, 1.0, 0.0)
    c = compose(a, b)
    assert close(c, Transform2(math.pi / 2, 1.0, 1.0))


def test_apply_examples():
    assert apply(Transform2.identity(), (3.2, -1.0)) == (3.2, -1.0)
    x, y = apply(Transform2(math.pi, 0.0, 0.0), (1.0, 0.0))
    assert x == pytest.approx(-1.0) and y == pytest.approx(0.0, abs=1e-12)
    x, y = apply(Transform2(math.pi / 2, 2.0, 0.0), (1.0, 0.0))
    assert x == pytest.approx(2.0) and y == pytest.approx(1.0)


@given(transforms, transforms, points)
def test_compose_matches_sequential_apply(a, b, p):
    direct = apply(compose(a, b), p)
    nested = apply(a, apply(b, p))
    assert np.allclose(direct, nested, atol=1e-9)


@given(transforms, points)
def test_inverse_round_trip(t, p):
    assert np.allclose(apply(inverse(t), apply(t, p)), p, atol=1e-9)


@given(transforms, transforms, transforms)
def test_compose_associative(a, b, c):
    assert close(compose(compose(a, b), c), compose(a, compose(b, c)))


@given(transforms, points, points)
def test_apply_is_rigid(t, p, q):
    d0 = math.dist(p, q)
    d1 = math.dist(apply(t, p), apply(t, q))
    assert abs(d0 - d1) < 1e-9


@given(st.floats(-100, 100, allow_nan=False), st.integers(-20, 20))
def test_normalize_periodic(theta, k):
    a = normalize_angle(theta + 2 * math.pi * k)
    b = normalize_angle(theta)
    # the two representations of the half-turn are the same angle
    assert abs(math.remainder(a - b, 2 * math.pi)) < 1e-9
    assert -math.pi < a <= math.pi


def test_normalize_maps_minus_pi_to_pi():
    assert normalize_angle(-math.pi) == math.pi


def test_pose_relative_and_points():
    base = Pose2(1.0, 2.0, math.pi / 2)
    pose = Pose2(1.0, 3.0, math.pi / 2)
    rel = pose.relative_to(base)
    assert rel.x == pytest.approx(1.0) and rel.y == pytest.approx(0.0, abs=1e-12)
    assert base.compose(rel).as_array() == pytest.approx(pose.as_array())
    pts = base.transform_points(np.array([[1.0, 0.0]]))
    assert pts[0] == pytest.approx([1.0, 3.0])


def scan(ranges, range_max=10.0, **kw):
    n = len(ranges)
    return LaserScan(np.linspace(-1, 1, n), np.array(ranges, float), np.full(n, 100.0), range_max, **kw)


def test_scan_validation():
    with pytest.raises(ValueError):
        LaserScan(np.array([]), np.array([]), np.array([]), 10.0)
    with pytest.raises(ValueError):
        LaserScan(np.array([0.0, 0.1]), np.array([1.0]), np.array([1.0, 2.0]), 10.0)
    with pytest.raises(ValueError):
        LaserScan(np.array([0.1, 0.0]), np.array([1.0, 1.0]), np.array([1.0, 2.0]), 10.0)
    with pytest.raises(ValueError):
        scan([1.0, -0.5])
    with pytest.raises(ValueError):
        scan([1.0, 11.0], no_return=[False, False])


def test_no_return_uses_sentinel():
    s = scan([1.0, 3.0, 10.0])
    assert s.no_return.tolist() == [False, False, True]
    s = scan([1.0, 3.0, 4.0], no_return=[False, True, False])
    assert s.ranges[1] == 10.0
    assert s.valid.tolist() == [True, False, True]
    with pytest.raises(ValueError):
        s.ranges[0] = 2.0


def test_endpoints_and_mask():
    s = LaserScan(np.array([0.0, math.pi / 2]), np.array([1.0, 2.0]), np.zeros(2), 5.0)
    assert np.allclose(s.endpoints(), [[1, 0], [0, 2]], atol=1e-12)
    assert np.allclose(s.endpoints(Pose2(1, 1, 0)), [[2, 1], [1, 3]], atol=1e-12)
    assert glass_mask_like(s).tolist() == [False, False]
    with pytest.raises(ValueError):
        glass_mask_like(s, [True])
