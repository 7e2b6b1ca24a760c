"""Intensity-peak glass detection on a single laser sweep.

A glass surface seen near normal incidence returns a sharp intensity spike.
Beam ``h`` opens a candidate peak when its intensity clears ``thresh`` and
jumps by at least ``grad`` over the previous beam. Every later beam that is
still above ``thresh`` without such a jump, and lies at most ``width`` beams
after ``h``, marks the beam half-way between itself and ``h`` as glass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .core_types import LaserScan


@dataclass(frozen=True)
class DetectorParams:
    thresh: float = 3000.0
    grad: float = 500.0
    width: int = 10

    def __post_init__(self):
        if not self.thresh > 0:
            raise ValueError("thresh must be positive")
        if not self.grad >= 0:
            raise ValueError("grad must be non-negative")
        if int(self.width) != self.width or self.width < 1:
            raise ValueError("width must be an integer >= 1")
        object.__setattr__(self, "width", int(self.width))


# Calibrations reported for the lab panels, the slam_glass dataset and the
# two office buildings.
LAB_PANELS = DetectorParams(thresh=3000, grad=500, width=10)
SLAM_GLASS_DATASET = DetectorParams(thresh=8000, grad=4000, width=5)
OFFICE_BUILDINGS = DetectorParams(thresh=1300, grad=100, width=10)


def effective_intensities(scan: LaserScan) -> np.ndarray:
    """Per-beam intensities with no-return beams forced to zero."""
    return np.where(scan.no_return, 0.0, scan.intensities)


def detect_glass(
    scan: Union[LaserScan, np.ndarray], params: DetectorParams
) -> np.ndarray:
    """Return the boolean glass mask for ``scan``.

    ``scan`` may also be a bare intensity profile. The candidate index persists
    until the next rising edge; a plateau beam seen before any rising edge
    marks nothing.
    """
    if isinstance(scan, LaserScan):
        intensity = effective_intensities(scan)
    else:
        intensity = np.asarray(scan, dtype=float)
    n = intensity.shape[0]
    if n < 2:
        raise ValueError("scan too short")

    mask = np.zeros(n, dtype=bool)
    diff = intensity[1:] - intensity[:-1]
    above = intensity[1:] >= params.thresh
    rising = above & (diff >= params.grad)
    plateau = above & ~rising

    idx = np.arange(1, n)
    # latest rising edge strictly before each beam (plateau beams are never rising)
    last_rise = np.maximum.accumulate(np.where(rising, idx, -1))
    ok = plateau & (last_rise >= 0) & (idx - last_rise <= params.width)
    p = idx[ok]
    h = last_rise[ok]
    mask[(p + h) // 2] = True
    return mask
