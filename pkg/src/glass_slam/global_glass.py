"""Keeps detected glass alive across submaps.

Detections are stored in the initial global frame. Fresh submaps are
seeded from that store (full mode). Lite mode skips seeding and raises the
miss probability so glass marked in older submaps fades slowly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core_types import Transform2
from .occupancy_submap import GridParams, Submap, SubmapStateError

MODES = ("off", "lite", "full")


@dataclass(frozen=True)
class GlassModeConfig:
    mode: str = "full"
    lite_p_miss: float = 0.499
    # half-width (m) of the square around a new submap's origin that is seeded
    seed_half_span: float = 12.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 < self.lite_p_miss < 0.5:
            raise ValueError("lite_p_miss must lie in (0, 0.5)")

    @property
    def detection_enabled(self) -> bool:
        return self.mode != "off"

    @property
    def seeding_enabled(self) -> bool:
        return self.mode == "full"


def effective_miss_probability(config: GlassModeConfig, params: GridParams) -> float:
    return config.lite_p_miss if config.mode == "lite" else params.p_miss


class GlassPointRegistry:
    """Append-only store of glass points in the initial global frame.

    Every registration is kept. Points that fall in an already known cell of
    the initial frame (at ``resolution``) are not repeated in
    :meth:`unique_points`, which is what seeding iterates over.
    """

    def __init__(self, resolution: float = 0.05):
        self.resolution = float(resolution)
        self._points: list[np.ndarray] = []
        self._first_seen: list[np.ndarray] = []
        self._cells: dict[tuple[int, int], int] = {}
        # per unique cell: initial-frame point, first submap id, and the
        # current-frame point with the correction it was registered under
        self._unique: list[tuple[float, float, int]] = []
        self._origin: list[tuple[float, float, Transform2]] = []

    def __len__(self) -> int:
        return sum(len(p) for p in self._points)

    @property
    def points(self) -> np.ndarray:
        if not self._points:
            return np.zeros((0, 2))
        return np.concatenate(self._points)

    @property
    def first_seen(self) -> np.ndarray:
        if not self._first_seen:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self._first_seen)

    def register(self, point, h_k: Transform2, submap_id: int = 0) -> "GlassPointRegistry":
        return self.register_many(np.asarray(point, dtype=float).reshape(1, 2), h_k, submap_id)

    def register_many(self, points: np.ndarray, h_k: Transform2, submap_id: int = 0) -> "GlassPointRegistry":
        """Map current-frame ``points`` to the initial frame through ``h_k`` and append."""
        initial = h_k.apply_many(points)
        self._points.append(initial)
        self._first_seen.append(np.full(len(initial), submap_id, dtype=np.int64))
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        cells = map(tuple, np.floor(initial / self.resolution).astype(np.int64).tolist())
        for cell, (x, y), (cx, cy) in zip(cells, initial.tolist(), points.tolist()):
            if cell not in self._cells:
                self._cells[cell] = len(self._unique)
                self._unique.append((x, y, int(submap_id)))
                self._origin.append((cx, cy, h_k))
        return self

    def unique_points(self) -> np.ndarray:
        if not self._unique:
            return np.zeros((0, 2))
        return np.array([(x, y) for x, y, _ in self._unique])

    def current_points(self, h_k: Transform2) -> np.ndarray:
        """Unique points expressed in the frame that ``h_k`` maps from.

        Points registered under this very correction come back bit-exact
        instead of through a floating-point round trip.
        """
        if not self._unique:
            return np.zeros((0, 2))
        out = h_k.inverse().apply_many(self.unique_points())
        for k, (cx, cy, h) in enumerate(self._origin):
            if h == h_k:
                out[k] = (cx, cy)
        return out

    def dump(self) -> str:
        """One "x y first_submap_id" line per registered point."""
        return "".join(
            f"{x!r} {y!r} {int(k)}\n" for (x, y), k in zip(self.points.tolist(), self.first_seen.tolist())
        )


def seed_submap(
    submap: Submap,
    registry: GlassPointRegistry,
    h_k: Transform2,
    params: GridParams,
    half_span: float = 12.0,
    allow_nonempty: bool = False,
) -> Submap:
    """Pin every registry point inside the submap's span as a glass cell.

    ``h_k`` maps current-frame coordinates to the initial frame; its inverse
    brings the stored points back into the frame the submap lives in.
    """
    if submap.insertion_count != 0 and not allow_nonempty:
        raise SubmapStateError(f"submap {submap.id} already holds {submap.insertion_count} scans")
    current = registry.current_points(h_k)
    if current.shape[0] == 0:
        return submap
    local = submap.global_pose.inverse().transform_points(current)
    in_span = np.all(np.abs(local) <= half_span, axis=1)
    if not np.any(in_span):
        return submap
    cells = submap.grid.cell_index(local[in_span])
    submap.grid.set_cells(np.unique(cells, axis=0), params.max_p, glass=True)
    return submap
