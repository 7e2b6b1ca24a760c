"""Pipeline configuration: every parameter block with defaults, YAML round-trip."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from .glass_detector import DetectorParams
from .global_glass import GlassModeConfig
from .lidar_simulator import LidarSpec
from .map_export import Thresholds
from .occupancy_submap import GridParams
from .slam_backend import LoopClosureParams
from .slam_frontend import MatchParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimulationParams:
    scenario: str = "corridor"
    laps: int = 2
    step: float = 0.1
    odometry_drift: float = 0.0


@dataclass(frozen=True)
class EvaluationParams:
    # None means two map cells
    corridor: Optional[float] = None


@dataclass(frozen=True)
class IOParams:
    env: Optional[str] = None
    traj: Optional[str] = None
    log: Optional[str] = None
    out: str = "out"
    name: str = "map"


@dataclass(frozen=True)
class BackendParams:
    loop_closure: bool = True
    optimize_every: int = 1


@dataclass(frozen=True)
class PipelineConfig:
    detector: DetectorParams = field(default_factory=DetectorParams)
    grid: GridParams = field(default_factory=GridParams)
    match: MatchParams = field(default_factory=MatchParams)
    loop: LoopClosureParams = field(default_factory=LoopClosureParams)
    glass: GlassModeConfig = field(default_factory=GlassModeConfig)
    lidar: LidarSpec = field(default_factory=LidarSpec)
    thresholds: Thresholds = field(default_factory=Thresholds)
    backend: BackendParams = field(default_factory=BackendParams)
    simulation: SimulationParams = field(default_factory=SimulationParams)
    evaluation: EvaluationParams = field(default_factory=EvaluationParams)
    io: IOParams = field(default_factory=IOParams)
    seed: int = 0


SECTIONS = [f.name for f in fields(PipelineConfig) if f.name != "seed"]


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def to_dict(config: PipelineConfig) -> dict:
    out: dict = {}
    for name in SECTIONS:
        block = getattr(config, name)
        out[name] = {f.name: _plain(getattr(block, f.name)) for f in fields(block)}
    out["seed"] = config.seed
    return out


def _coerce(current, value, where: str):
    if value is None:
        return None
    if isinstance(current, bool):
        if isinstance(value, str):
            lowered = value.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"{where}: expected a boolean, got {value!r}")
        return bool(value)
    if isinstance(current, tuple):
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split()]
        return tuple(float(v) for v in value)
    if isinstance(current, int):
        try:
            as_float = float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: expected an integer, got {value!r}") from exc
        if as_float != int(as_float):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(as_float)
    if isinstance(current, float):
        try:
            return float(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: expected a number, got {value!r}") from exc
    if current is None and isinstance(value, str):
        # optional fields: numbers stay numbers, anything else is a string
        try:
            return float(value)
        except ValueError:
            return value
    return value


def apply_overrides(config: PipelineConfig, overrides: dict) -> PipelineConfig:
    """Overrides are ``{"section.field": value}`` or ``{"seed": value}``."""
    sections: dict = {}
    seed = config.seed
    for key, value in overrides.items():
        if key == "seed":
            seed = _coerce(config.seed, value, "seed")
            continue
        if "." not in key:
            raise ConfigError(f"unknown configuration key {key!r}")
        section, name = key.split(".", 1)
        if section not in SECTIONS:
            raise ConfigError(f"unknown configuration section {section!r}")
        block = getattr(config, section)
        names = {f.name for f in fields(block)}
        if name not in names:
            raise ConfigError(f"unknown configuration key {key!r}")
        current = getattr(block, name)
        if section == "io" or (section == "evaluation" and name == "corridor"):
            coerced = value if value is None or section == "io" else float(value)
        else:
            coerced = _coerce(current, value, key)
        sections.setdefault(section, {})[name] = coerced
    try:
        updated = {s: replace(getattr(config, s), **vals) for s, vals in sections.items()}
        return replace(config, seed=seed, **updated)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def from_dict(data: Optional[dict]) -> PipelineConfig:
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    overrides = {}
    for key, value in data.items():
        if key == "seed":
            overrides["seed"] = value
        elif key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a mapping")
            for name, v in value.items():
                overrides[f"{key}.{name}"] = v
        else:
            raise ConfigError(f"unknown configuration section {key!r}")
    return apply_overrides(PipelineConfig(), overrides)


def load_config(path) -> PipelineConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(data)


def dump_config(config: PipelineConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=False)


def save_config(config: PipelineConfig, path) -> None:
    Path(path).write_text(dump_config(config))


def flag_names(config: PipelineConfig = PipelineConfig()) -> list[tuple[str, Any]]:
    """All ``section.field`` keys with their default values."""
    out = []
    for name in SECTIONS:
        block = getattr(config, name)
        out.extend((f"{name}.{f.name}", getattr(block, f.name)) for f in fields(block))
    return out
