"""Locating inclusions in a wave speed from boundary measurements.

The pipeline simulates the Neumann-to-Dirichlet map of the acoustic wave
equation, estimates volumes of domains of influence by boundary control,
and turns volume comparisons into distances from the boundary to the
inclusion, a boundary distance hull and direction segments.
"""

from .config import ConfigError, ExperimentConfig
from .control import KOperator, assemble_K, estimate_volume
from .detect import locate_known_bg, reconstruct_hull_and_segments, scan_boundary, smoothness_test_unknown_bg
from .eikonal import eikonal_distance
from .forward import LambdaOperator, SourceBasis, TimeGrid, assemble_lambda_matrix, solve_wave
from .geometry import TauFunction, domain_of_influence, epsilon_scaling_probe, volume_pair
from .grid import DiscreteDomain, Disk, HalfPlane, SpeedModel, Triangle

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "ExperimentConfig", "KOperator", "assemble_K", "estimate_volume", "locate_known_bg",
    "reconstruct_hull_and_segments", "scan_boundary", "smoothness_test_unknown_bg", "eikonal_distance",
    "LambdaOperator", "SourceBasis", "TimeGrid", "assemble_lambda_matrix", "solve_wave", "TauFunction",
    "domain_of_influence", "epsilon_scaling_probe", "volume_pair", "DiscreteDomain", "Disk", "HalfPlane",
    "SpeedModel", "Triangle",
]
