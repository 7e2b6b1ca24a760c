import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from glass_slam.core_types import LaserScan
from glass_slam.glass_detector import (
    LAB_PANELS,
    OFFICE_BUILDINGS,
    SLAM_GLASS_DATASET,
    DetectorParams,
    detect_glass,
)
from oracles import naive_detect_glass

LAB = DetectorParams(3000, 500, 10)


def test_hand_trace():
    mask = detect_glass(np.array([100, 100, 5000, 5200, 5100, 100.0]), LAB)
    assert mask.tolist() == [False, False, True, True, False, False]


def test_below_threshold_is_empty():
    assert not detect_glass(np.full(20, 2999.0), LAB).any()


def test_calibrations_accepted():
    assert (LAB_PANELS.thresh, LAB_PANELS.grad, LAB_PANELS.width) == (3000, 500, 10)
    assert (SLAM_GLASS_DATASET.thresh, SLAM_GLASS_DATASET.grad, SLAM_GLASS_DATASET.width) == (8000, 4000, 5)
    assert (OFFICE_BUILDINGS.thresh, OFFICE_BUILDINGS.grad, OFFICE_BUILDINGS.width) == (1300, 100, 10)


@pytest.mark.parametrize("kw", [dict(thresh=0), dict(grad=-1), dict(width=0)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        DetectorParams(**kw)


def test_too_short():
    with pytest.raises(ValueError, match="scan too short"):
        detect_glass(np.array([5000.0]), LAB)


def test_plateau_before_first_rise_marks_nothing():
    # starts high: no rising edge ever recorded
    assert not detect_glass(np.array([5000, 5000, 5000, 5000.0]), LAB).any()


def test_candidate_persists_across_dips():
    prof = np.array([0, 5000, 5100, 100, 100, 5000, 5050.0])
    # second rise at 5 resets h; beam 6 marks floor(11/2)=5
    assert np.flatnonzero(detect_glass(prof, LAB)).tolist() == [1, 5]


def test_width_limit():
    prof = np.array([0] + [5000] * 15, dtype=float)
    marked = np.flatnonzero(detect_glass(prof, DetectorParams(3000, 500, 4)))
    # h=1, plateau beams 2..5 qualify -> midpoints 1,2,2,3
    assert marked.tolist() == [1, 2, 3]


def test_no_return_counts_as_zero():
    angles = np.linspace(-0.1, 0.1, 4)
    s = LaserScan(angles, np.array([1.0, 1.0, 1.0, 1.0]), np.array([9000, 9000, 9000, 9000.0]), 10.0,
                  no_return=[True, False, False, False])
    # the zeroed first beam makes beam 1 a rising edge
    assert detect_glass(s, LAB).tolist() == [False, True, True, False]


profiles = st.lists(st.integers(0, 8000), min_size=2, max_size=64)
params = st.builds(DetectorParams, st.integers(1, 7000), st.integers(0, 3000), st.integers(1, 12))


@given(profiles, params)
def test_matches_naive_oracle(prof, p):
    arr = np.array(prof, float)
    assert detect_glass(arr, p).tolist() == naive_detect_glass(arr, p.thresh, p.grad, p.width)


def test_halving_can_set_a_new_bit():
    # halving turns the rising edge at 3 into a plateau beam of the edge at 2
    prof = np.array([2000, 0, 6500, 8000, 7000, 0, 7000.0])
    p = DetectorParams(1722, 904, 2)
    assert np.flatnonzero(detect_glass(prof, p)).tolist() == [3]
    assert np.flatnonzero(detect_glass(prof * 0.5, p)).tolist() == [2, 3]


@given(st.lists(st.integers(0, 8000), min_size=2, max_size=32), params, st.floats(0.0, 1.0))
def test_scaled_below_threshold_clears_everything(prof, p, scale):
    arr = np.array(prof, float) * scale
    if arr.max() < p.thresh:
        assert not detect_glass(arr, p).any()


@given(st.lists(st.integers(0, 8000), min_size=2, max_size=32), params)
def test_marks_lie_between_a_rise_and_its_plateau(prof, p):
    arr = np.array(prof, float)
    diff = np.diff(arr)
    rising = {i + 1 for i in range(len(diff)) if arr[i + 1] >= p.thresh and diff[i] >= p.grad}
    for r in np.flatnonzero(detect_glass(arr, p)):
        # some rise h with r = floor((q + h)/2), h < q <= h + width
        assert any(h <= r < h + p.width for h in rising)


@given(profiles, params)
def test_deterministic(prof, p):
    arr = np.array(prof, float)
    assert np.array_equal(detect_glass(arr, p), detect_glass(arr.copy(), p))
