"""Probability-grid submaps with odds updates and the local glass mapping scheme."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple, Optional

import numpy as np

from .core_types import LaserScan, Pose2, Transform2


class SubmapStateError(RuntimeError):
    """Raised on an operation that is illegal in the submap's lifecycle state."""


@dataclass(frozen=True)
class GridParams:
    resolution: float = 0.05
    p_hit: float = 0.55
    p_miss: float = 0.49
    p_clamp_min: float = 0.12
    p_clamp_max: float = 0.971
    scans_per_submap: int = 90

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if not 0.0 < self.p_miss < 0.5 < self.p_hit < 1.0:
            raise ValueError("need 0 < p_miss < 0.5 < p_hit < 1")
        if not 0.0 < self.p_clamp_min < 0.5 < self.p_clamp_max < 1.0:
            raise ValueError("clamp bounds must straddle 0.5 inside (0, 1)")
        if self.scans_per_submap < 1:
            raise ValueError("scans_per_submap must be >= 1")

    @property
    def max_p(self) -> float:
        """Probability pinned on identified glass cells."""
        return self.p_clamp_max

    def with_miss(self, p_miss: float) -> "GridParams":
        return replace(self, p_miss=p_miss)


def odds(p):
    """p / (1 - p); accepts scalars or arrays in the open unit interval."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError("odds is defined for probabilities in (0, 1)")
    result = arr / (1.0 - arr)
    return float(result) if result.ndim == 0 else result


def probability_from_odds(o):
    arr = np.asarray(o, dtype=float)
    result = arr / (1.0 + arr)
    return float(result) if result.ndim == 0 else result


def update_cell(m_old, p, params: GridParams):
    """Bayesian odds update of a cell, clamped to the configured bounds."""
    if isinstance(m_old, float) and isinstance(p, float):
        # scalar path: same IEEE arithmetic as the array path, without numpy overhead
        if not (0.0 < m_old < 1.0 and 0.0 < p < 1.0):
            raise ValueError("odds is defined for probabilities in (0, 1)")
        o = (m_old / (1.0 - m_old)) * (p / (1.0 - p))
        return min(max(o / (1.0 + o), params.p_clamp_min), params.p_clamp_max)
    updated = np.clip(
        probability_from_odds(odds(m_old) * odds(p)), params.p_clamp_min, params.p_clamp_max
    )
    return float(updated) if updated.ndim == 0 else updated


class CellState(NamedTuple):
    probability: float
    glass_id: bool


class ProbabilityGrid:
    """Sparse-by-growth occupancy grid.

    Storage is a dense window that grows on demand; cells never observed are
    NaN and are reported as absent. Cell (i, j) covers
    [i*res, (i+1)*res) x [j*res, (j+1)*res) in the grid frame, which is the
    submap frame mapped through ``origin``.
    """

    _GROW_MARGIN = 32

    def __init__(self, resolution: float, origin: Optional[Transform2] = None):
        self.resolution = float(resolution)
        self.origin = origin if origin is not None else Transform2.identity()
        self._i0 = 0
        self._j0 = 0
        self._prob = np.full((0, 0), np.nan)
        self._glass = np.zeros((0, 0), dtype=bool)

    # -- indexing ---------------------------------------------------------
    def to_grid_units(self, points: np.ndarray) -> np.ndarray:
        """Submap-frame points -> continuous grid coordinates (cells)."""
        return self.origin.apply_many(points) / self.resolution

    def cell_index(self, points: np.ndarray) -> np.ndarray:
        return np.floor(self.to_grid_units(points)).astype(np.int64)

    def cell_center(self, cells: np.ndarray) -> np.ndarray:
        """Grid cell indices -> submap-frame coordinates of the cell centers."""
        cells = np.asarray(cells, dtype=float).reshape(-1, 2)
        return self.origin.inverse().apply_many((cells + 0.5) * self.resolution)

    @property
    def shape(self) -> tuple[int, int]:
        return self._prob.shape

    @property
    def offset(self) -> tuple[int, int]:
        return (self._i0, self._j0)

    def ensure(self, cells: np.ndarray) -> None:
        """Grow storage so every (i, j) in ``cells`` is addressable."""
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        if cells.shape[0] == 0:
            return
        lo = cells.min(axis=0)
        hi = cells.max(axis=0)
        ni, nj = self._prob.shape
        if ni and lo[0] >= self._i0 and lo[1] >= self._j0 and hi[0] < self._i0 + ni and hi[1] < self._j0 + nj:
            return
        if ni:
            lo = np.minimum(lo, (self._i0, self._j0))
            hi = np.maximum(hi, (self._i0 + ni - 1, self._j0 + nj - 1))
        lo = lo - self._GROW_MARGIN
        hi = hi + self._GROW_MARGIN
        prob = np.full((hi[0] - lo[0] + 1, hi[1] - lo[1] + 1), np.nan)
        glass = np.zeros(prob.shape, dtype=bool)
        if ni:
            si, sj = self._i0 - lo[0], self._j0 - lo[1]
            prob[si : si + ni, sj : sj + nj] = self._prob
            glass[si : si + ni, sj : sj + nj] = self._glass
        self._i0, self._j0 = int(lo[0]), int(lo[1])
        self._prob, self._glass = prob, glass

    def _local(self, cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        return cells[:, 0] - self._i0, cells[:, 1] - self._j0

    def _inside(self, cells: np.ndarray) -> np.ndarray:
        li, lj = self._local(cells)
        ni, nj = self._prob.shape
        return (li >= 0) & (li < ni) & (lj >= 0) & (lj < nj)

    # -- access -----------------------------------------------------------
    def probabilities(self, cells: np.ndarray, unknown: float = np.nan) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        out = np.full(cells.shape[0], unknown, dtype=float)
        inside = self._inside(cells)
        li, lj = self._local(cells[inside])
        values = self._prob[li, lj]
        out[inside] = np.where(np.isnan(values), unknown, values)
        return out

    def glass_flags(self, cells: np.ndarray) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        out = np.zeros(cells.shape[0], dtype=bool)
        inside = self._inside(cells)
        li, lj = self._local(cells[inside])
        out[inside] = self._glass[li, lj]
        return out

    def get(self, i: int, j: int) -> Optional[CellState]:
        cell = np.array([[i, j]])
        p = self.probabilities(cell)[0]
        if math.isnan(p):
            return None
        return CellState(float(p), bool(self.glass_flags(cell)[0]))

    def set_cells(self, cells: np.ndarray, probability, glass: Optional[bool] = None) -> None:
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        if cells.shape[0] == 0:
            return
        self.ensure(cells)
        li, lj = self._local(cells)
        self._prob[li, lj] = probability
        if glass is not None:
            self._glass[li, lj] = glass

    def known_cells(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(cells (K, 2), probabilities (K,), glass flags (K,)) of observed cells."""
        li, lj = np.nonzero(~np.isnan(self._prob))
        cells = np.column_stack((li + self._i0, lj + self._j0)).astype(np.int64)
        return cells, self._prob[li, lj].copy(), self._glass[li, lj].copy()

    def items(self) -> Iterator[tuple[tuple[int, int], CellState]]:
        cells, probs, glass = self.known_cells()
        for (i, j), p, g in zip(cells, probs, glass):
            yield (int(i), int(j)), CellState(float(p), bool(g))

    def __len__(self) -> int:
        return int(np.count_nonzero(~np.isnan(self._prob)))

    def dense(self, unknown: float = 0.0) -> tuple[np.ndarray, tuple[int, int]]:
        """Probability array with unknown cells filled, plus its index offset."""
        return np.where(np.isnan(self._prob), unknown, self._prob), (self._i0, self._j0)

    def copy(self) -> "ProbabilityGrid":
        other = ProbabilityGrid(self.resolution, self.origin)
        other._i0, other._j0 = self._i0, self._j0
        other._prob = self._prob.copy()
        other._glass = self._glass.copy()
        return other


def traverse_rays(
    starts: np.ndarray, ends: np.ndarray, ordered: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Supercover traversal of many segments given in grid units.

    Returns ``(ray_ids, cells)``: every cell each segment passes through,
    excluding the cell holding the segment's end. Each grid-line crossing at
    parameter t contributes the cell the ray occupies just before it; with
    ``ordered`` the cells of each ray are sorted by t (start first).
    """
    ends = np.asarray(ends, dtype=float).reshape(-1, 2)
    starts = np.broadcast_to(np.asarray(starts, dtype=float).reshape(-1, 2), ends.shape)
    c0 = np.floor(starts).astype(np.int64)
    c1 = np.floor(ends).astype(np.int64)
    steps = np.sign(c1 - c0)
    counts = np.abs(c1 - c0)
    delta = ends - starts
    ids, cells, params = [], [], []
    for axis in (0, 1):
        other = 1 - axis
        kmax = int(counts[:, axis].max(initial=0))
        if kmax == 0:
            continue
        rays = np.flatnonzero(counts[:, axis] > 0)
        k = np.arange(1, kmax + 1)
        valid = k[None, :] <= counts[rays, axis, None]
        step = steps[rays, axis, None]
        before = c0[rays, axis, None] + (k[None, :] - 1) * step  # cell index before crossing k
        line = np.where(step > 0, before + 1, before)
        t = (line - starts[rays, axis, None]) / delta[rays, axis, None]
        # padding entries past a ray's own crossings can overflow; real crossings lie in [0, 1]
        t = np.clip(t, 0.0, 1.0)
        other_coord = starts[rays, other, None] + t * delta[rays, other, None]
        other_cell = np.floor(other_coord).astype(np.int64)
        # stay within the span of the ray on the other axis (guards rounding at the ends)
        lo = np.minimum(c0[rays, other], c1[rays, other])[:, None]
        hi = np.maximum(c0[rays, other], c1[rays, other])[:, None]
        other_cell = np.clip(other_cell, lo, hi)
        pair = np.empty(valid.shape + (2,), dtype=np.int64)
        pair[..., axis] = before
        pair[..., other] = other_cell
        ids.append(np.broadcast_to(rays[:, None], valid.shape)[valid])
        cells.append(pair[valid])
        params.append(t[valid])
    if not ids:
        return np.zeros(0, dtype=np.int64), np.zeros((0, 2), dtype=np.int64)
    ray_ids = np.concatenate(ids)
    out = np.concatenate(cells)
    if ordered:
        order = np.lexsort((np.concatenate(params), ray_ids))
        ray_ids, out = ray_ids[order], out[order]
        # a ray through a lattice corner crosses both lines at once
        repeat = np.zeros(ray_ids.shape[0], dtype=bool)
        repeat[1:] = (ray_ids[1:] == ray_ids[:-1]) & np.all(out[1:] == out[:-1], axis=1)
        ray_ids, out = ray_ids[~repeat], out[~repeat]
    return ray_ids, out


def traverse_ray(grid: ProbabilityGrid, start, end) -> list[tuple[int, int]]:
    """Cells crossed by the submap-frame segment start -> end, end cell excluded."""
    pts = grid.to_grid_units(np.array([start, end], dtype=float))
    _, cells = traverse_rays(pts[0], pts[1:])
    return [(int(i), int(j)) for i, j in cells]


@dataclass
class Submap:
    id: int
    global_pose: Pose2
    grid: ProbabilityGrid
    insertion_count: int = 0
    finished: bool = False
    scan_ids: list = field(default_factory=list)

    @classmethod
    def create(cls, submap_id: int, global_pose: Pose2, params: GridParams) -> "Submap":
        return cls(submap_id, global_pose, ProbabilityGrid(params.resolution))


def insert_scan(
    submap: Submap,
    scan: LaserScan,
    mask: Optional[np.ndarray],
    scan_pose_in_submap: Pose2,
    registry=None,
    h_k: Optional[Transform2] = None,
    params: GridParams = GridParams(),
) -> Submap:
    """Insert one scan into ``submap`` (in place) and return it.

    Beam endpoints are hits and crossed cells are misses; each cell receives
    at most one update per scan and a hit wins over a miss. Glass-masked
    endpoints are pinned to ``params.max_p`` with the glass identifier and,
    when ``registry`` is given, reported through ``registry.register_many``
    in current global coordinates together with ``h_k``. Cells carrying the
    identifier are never updated afterwards.
    """
    if submap.finished:
        raise SubmapStateError(f"submap {submap.id} is finished")
    if mask is None:
        mask = np.zeros(len(scan), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(scan),):
        raise ValueError("glass mask length must equal the scan beam count")

    grid = submap.grid
    ends_local = scan.endpoints(scan_pose_in_submap)
    start_units = grid.to_grid_units(np.array([[scan_pose_in_submap.x, scan_pose_in_submap.y]]))[0]
    end_units = grid.to_grid_units(ends_local)
    _, miss_cells = traverse_rays(start_units, end_units, ordered=False)

    returned = scan.valid
    end_cells = np.floor(end_units).astype(np.int64)
    hit_cells = end_cells[returned]
    glass_beams = returned & mask
    grid.ensure(np.concatenate((miss_cells, hit_cells)))

    ncols = grid.shape[1]
    def flat(cells):
        li, lj = grid._local(cells)
        return li * ncols + lj

    hit_keys = np.unique(flat(hit_cells))
    miss_keys = np.unique(flat(miss_cells))
    # hits take precedence over misses within one scan
    miss_keys = miss_keys[~np.isin(miss_keys, hit_keys, assume_unique=True)]

    if np.any(glass_beams):
        glass_keys = np.unique(flat(end_cells[glass_beams]))
        grid._prob.flat[glass_keys] = params.max_p
        grid._glass.flat[glass_keys] = True
        if registry is not None:
            points = submap.global_pose.transform_points(ends_local[glass_beams])
            registry.register_many(points, h_k or Transform2.identity(), submap.id)

    _apply_update(grid, hit_keys, params.p_hit, params)
    _apply_update(grid, miss_keys, params.p_miss, params)

    submap.insertion_count += 1
    if submap.insertion_count >= params.scans_per_submap:
        submap.finished = True
    return submap


def _apply_update(grid: ProbabilityGrid, keys: np.ndarray, p: float, params: GridParams) -> None:
    """Odds update of the flat storage indices ``keys``, skipping glass cells."""
    if keys.shape[0] == 0:
        return
    keys = keys[~grid._glass.flat[keys]]
    prior = grid._prob.flat[keys]
    prior = np.where(np.isnan(prior), 0.5, prior)
    grid._prob.flat[keys] = update_cell(prior, p, params)
