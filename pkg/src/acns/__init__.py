"""Artificial-compressibility approximation of incompressible flow past an obstacle."""

from .ac_solver import InitialDataSpec, SimConfig, Trajectory, initialize, run
from .errors import ACNSError
from .geometry import Disk, GeometrySpec, Rectangle, build_domain, standard_geometry
from .ns_reference import run_reference

__all__ = [
    "ACNSError",
    "Disk",
    "GeometrySpec",
    "InitialDataSpec",
    "Rectangle",
    "SimConfig",
    "Trajectory",
    "build_domain",
    "initialize",
    "run",
    "run_reference",
    "standard_geometry",
]

__version__ = "0.1.0"
