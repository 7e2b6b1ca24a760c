"""Graph-based 2D lidar SLAM that keeps glass walls in the map.

Glass is picked out of each scan by its intensity spike at near-normal
incidence, pinned at maximum occupancy inside submaps, and remembered in a
global registry so later submaps start with it already present.
"""

from .core_types import LaserScan, Pose2, Transform2
from .glass_detector import DetectorParams, detect_glass
from .occupancy_submap import GridParams, ProbabilityGrid, Submap, insert_scan, update_cell
from .global_glass import GlassModeConfig, GlassPointRegistry, seed_submap
from .config import PipelineConfig
from .pipeline import run_pipeline

__version__ = "0.1.0"

__all__ = [
    "DetectorParams",
    "GlassModeConfig",
    "GlassPointRegistry",
    "GridParams",
    "LaserScan",
    "PipelineConfig",
    "Pose2",
    "ProbabilityGrid",
    "Submap",
    "Transform2",
    "detect_glass",
    "insert_scan",
    "run_pipeline",
    "seed_submap",
    "update_cell",
]
