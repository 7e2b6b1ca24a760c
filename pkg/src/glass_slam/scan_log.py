"""Text formats: scan logs, trajectories, environments and registry dumps.

Scan log: one record per line, whitespace-separated fields

    timestamp range_max odom angles ranges intensities no_return

``odom`` is ``x,y,theta`` or ``-``; the three arrays are comma-separated
numbers; ``no_return`` lists the indices of beams without echo (``-`` for
none). Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .core_types import LaserScan, Pose2
from .lidar_simulator import MATERIALS, Environment, Trajectory


class ParseError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


@dataclass(frozen=True, eq=False)
class ScanLogRecord:
    scan: LaserScan
    odometry: Optional[Pose2] = None

    @property
    def timestamp(self) -> float:
        return self.scan.timestamp


def _floats(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def format_record(record: ScanLogRecord) -> str:
    s = record.scan
    odom = "-" if record.odometry is None else f"{record.odometry.x!r},{record.odometry.y!r},{record.odometry.theta!r}"
    idx = np.flatnonzero(s.no_return)
    no_return = ",".join(str(int(i)) for i in idx) if idx.size else "-"
    return " ".join(
        [repr(s.timestamp), repr(s.range_max), odom, _floats(s.angles), _floats(s.ranges), _floats(s.intensities), no_return]
    )


def write_scan_log(path, records: Iterable[ScanLogRecord]) -> None:
    with open(path, "w") as fh:
        fh.write("# glass-slam scan log: t range_max odom angles ranges intensities no_return\n")
        for rec in records:
            fh.write(format_record(rec) + "\n")


def _parse_array(text: str, path, lineno: int, what: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError as exc:
        raise ParseError(path, lineno, f"bad {what} array: {exc}") from None


def parse_record(line: str, path="<string>", lineno: int = 1) -> ScanLogRecord:
    parts = line.split()
    if len(parts) != 7:
        raise ParseError(path, lineno, f"expected 7 fields, found {len(parts)}")
    try:
        timestamp = float(parts[0])
        range_max = float(parts[1])
    except ValueError as exc:
        raise ParseError(path, lineno, str(exc)) from None
    odometry = None
    if parts[2] != "-":
        odom = _parse_array(parts[2], path, lineno, "odometry")
        if odom.shape != (3,):
            raise ParseError(path, lineno, "odometry needs x,y,theta")
        odometry = Pose2(*odom)
    angles = _parse_array(parts[3], path, lineno, "angle")
    ranges = _parse_array(parts[4], path, lineno, "range")
    intensities = _parse_array(parts[5], path, lineno, "intensity")
    if not (len(angles) == len(ranges) == len(intensities)):
        raise ParseError(
            path, lineno, f"array lengths differ: {len(angles)} angles, {len(ranges)} ranges, {len(intensities)} intensities"
        )
    no_return = np.zeros(len(ranges), dtype=bool)
    if parts[6] != "-":
        try:
            idx = [int(v) for v in parts[6].split(",")]
        except ValueError as exc:
            raise ParseError(path, lineno, f"bad no-return list: {exc}") from None
        if any(i < 0 or i >= len(ranges) for i in idx):
            raise ParseError(path, lineno, "no-return index out of range")
        no_return[idx] = True
    try:
        scan = LaserScan(angles, ranges, intensities, range_max, timestamp, no_return)
    except ValueError as exc:
        raise ParseError(path, lineno, str(exc)) from None
    return ScanLogRecord(scan, odometry)


def load_scan_log(path) -> Iterator[ScanLogRecord]:
    """Stream records from ``path``; raises ParseError on bad or out-of-order lines."""
    last = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            rec = parse_record(stripped, path, lineno)
            if last is not None and not rec.timestamp > last:
                raise ParseError(path, lineno, f"timestamp {rec.timestamp!r} does not follow {last!r}")
            last = rec.timestamp
            yield rec


# -- trajectories ----------------------------------------------------------


def format_trajectory(poses) -> str:
    return "".join(f"{t!r} {p.x!r} {p.y!r} {p.theta!r}\n" for t, p in poses)


def write_trajectory(path, poses) -> None:
    Path(path).write_text(format_trajectory(poses))


def read_trajectory(path) -> list:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 4:
            raise ParseError(path, lineno, f"expected 't x y theta', found {len(parts)} fields")
        try:
            t, x, y, th = (float(v) for v in parts)
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if out and not t > out[-1][0]:
            raise ParseError(path, lineno, "timestamps must increase")
        out.append((t, Pose2(x, y, th)))
    return out


def read_trajectory_file(path) -> Trajectory:
    rows = read_trajectory(path)
    return Trajectory(np.array([t for t, _ in rows]), tuple(p for _, p in rows))


# -- environments ----------------------------------------------------------


def format_environment(env: Environment) -> str:
    lines = ["# x1 y1 x2 y2 material\n"]
    for (x1, y1, x2, y2), m in zip(env.segments.tolist(), env.materials):
        lines.append(f"{x1!r} {y1!r} {x2!r} {y2!r} {m}\n")
    return "".join(lines)


def write_environment(path, env: Environment) -> None:
    Path(path).write_text(format_environment(env))


def read_environment(path) -> Environment:
    segs, mats = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 5:
            raise ParseError(path, lineno, "expected 'x1 y1 x2 y2 material'")
        if parts[4] not in MATERIALS:
            raise ParseError(path, lineno, f"unknown material {parts[4]!r}")
        try:
            segs.append([float(v) for v in parts[:4]])
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        mats.append(parts[4])
    try:
        return Environment(np.array(segs, dtype=float).reshape(-1, 4), tuple(mats))
    except ValueError as exc:
        raise ParseError(path, 0, str(exc)) from None
