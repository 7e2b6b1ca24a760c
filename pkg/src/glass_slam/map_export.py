"""Rendering submaps into a global occupancy image and map_server-style files."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .core_types import Pose2
from .occupancy_submap import Submap

OCCUPIED_PIXEL = 0
FREE_PIXEL = 254
UNKNOWN_PIXEL = 205


@dataclass(frozen=True)
class Thresholds:
    occupied: float = 0.65
    free: float = 0.35


@dataclass(eq=False)
class OccupancyMap:
    """Global map image. Row 0 is the top (largest y); ``origin`` is the world
    position of the lower-left corner of the bottom-left pixel."""

    image: np.ndarray
    resolution: float
    origin: tuple = (0.0, 0.0, 0.0)
    thresholds: Thresholds = Thresholds()

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def pixel_centers(self, pixel_value: int) -> np.ndarray:
        """World coordinates (K, 2) of the centres of pixels equal to ``pixel_value``."""
        rows, cols = np.nonzero(self.image == pixel_value)
        x = self.origin[0] + (cols + 0.5) * self.resolution
        y = self.origin[1] + (self.height - 1 - rows + 0.5) * self.resolution
        return np.column_stack((x, y))

    def occupied_points(self) -> np.ndarray:
        return self.pixel_centers(OCCUPIED_PIXEL)


def classify(prob: np.ndarray, thresholds: Thresholds = Thresholds()) -> np.ndarray:
    """Probability array (NaN = unknown) -> pixel values."""
    out = np.full(prob.shape, UNKNOWN_PIXEL, dtype=np.uint8)
    with np.errstate(invalid="ignore"):
        out[prob > thresholds.occupied] = OCCUPIED_PIXEL
        out[prob < thresholds.free] = FREE_PIXEL
    return out


def render_global_grid(
    submaps: Sequence[Submap],
    poses: Mapping[int, Pose2],
    resolution: float,
    thresholds: Thresholds = Thresholds(),
) -> tuple[np.ndarray, tuple[float, float]]:
    """Compose submaps into one probability array in the global frame.

    Submaps are painted in id (finishing) order. A later submap overrides a
    cell only where its own value is decided (occupied or free); undecided
    values never erase an earlier decision. Returns (prob[x, y], lower-left
    corner) with NaN for unknown cells.
    """
    if not submaps:
        raise ValueError("cannot export an empty map")
    boxes = []
    for sm in submaps:
        cells, _, _ = sm.grid.known_cells()
        if cells.shape[0] == 0:
            continue
        corners = []
        for di in (0, 1):
            for dj in (0, 1):
                local = sm.grid.origin.inverse().apply_many((cells + (di, dj)) * sm.grid.resolution)
                corners.append(poses[sm.id].transform_points(local))
        pts = np.concatenate(corners)
        boxes.append((pts.min(axis=0), pts.max(axis=0)))
    if not boxes:
        raise ValueError("cannot export an empty map")
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    i0 = int(math.floor(lo[0] / resolution + 1e-9))
    j0 = int(math.floor(lo[1] / resolution + 1e-9))
    i1 = int(math.ceil(hi[0] / resolution - 1e-9))
    j1 = int(math.ceil(hi[1] / resolution - 1e-9))
    nx, ny = max(i1 - i0, 1), max(j1 - j0, 1)
    prob = np.full((nx, ny), np.nan)
    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    centers = np.column_stack((((ii + i0 + 0.5) * resolution).ravel(), ((jj + j0 + 0.5) * resolution).ravel()))
    for sm in sorted(submaps, key=lambda s: s.id):
        if len(sm.grid) == 0:
            continue
        local = poses[sm.id].inverse().transform_points(centers)
        values = sm.grid.probabilities(sm.grid.cell_index(local)).reshape(nx, ny)
        with np.errstate(invalid="ignore"):
            decided = (values > thresholds.occupied) | (values < thresholds.free)
        paint = decided | (np.isnan(prob) & ~np.isnan(values))
        prob[paint] = values[paint]
    return prob, (i0 * resolution, j0 * resolution)


def to_image(prob_xy: np.ndarray, thresholds: Thresholds = Thresholds()) -> np.ndarray:
    """(x, y)-indexed probabilities -> row-major image with row 0 at the top."""
    return np.ascontiguousarray(np.flipud(classify(prob_xy, thresholds).T))


def build_map(
    submaps: Sequence[Submap],
    poses: Mapping[int, Pose2],
    resolution: float,
    thresholds: Thresholds = Thresholds(),
) -> OccupancyMap:
    prob, corner = render_global_grid(submaps, poses, resolution, thresholds)
    return OccupancyMap(to_image(prob, thresholds), resolution, (corner[0], corner[1], 0.0), thresholds)


def pgm_bytes(image: np.ndarray) -> bytes:
    image = np.asarray(image, dtype=np.uint8)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    return header + image.tobytes()


def metadata_text(m: OccupancyMap, image_name: str) -> str:
    ox, oy, oth = m.origin
    return (
        f"image: {image_name}\n"
        f"resolution: {m.resolution!r}\n"
        f"origin: [{ox!r}, {oy!r}, {oth!r}]\n"
        f"negate: 0\n"
        f"occupied_thresh: {m.thresholds.occupied!r}\n"
        f"free_thresh: {m.thresholds.free!r}\n"
    )


def write_map(m: OccupancyMap, stem) -> tuple[Path, Path]:
    """Write ``<stem>.pgm`` and ``<stem>.yaml``; returns both paths."""
    stem = Path(stem)
    pgm = stem.with_suffix(".pgm")
    meta = stem.with_suffix(".yaml")
    pgm.write_bytes(pgm_bytes(m.image))
    meta.write_text(metadata_text(m, pgm.name))
    return pgm, meta


def export_map(submaps, poses, resolution, stem, thresholds: Thresholds = Thresholds()) -> OccupancyMap:
    m = build_map(submaps, poses, resolution, thresholds)
    write_map(m, stem)
    return m


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM is not supported")
    pixels = np.frombuffer(data[pos + 1 : pos + 1 + width * height], dtype=np.uint8)
    return pixels.reshape(height, width).copy()


def read_map(yaml_path) -> OccupancyMap:
    yaml_path = Path(yaml_path)
    meta = yaml.safe_load(yaml_path.read_text())
    image = read_pgm(yaml_path.parent / meta["image"])
    return OccupancyMap(
        image,
        float(meta["resolution"]),
        tuple(float(v) for v in meta["origin"]),
        Thresholds(float(meta.get("occupied_thresh", 0.65)), float(meta.get("free_thresh", 0.35))),
    )
