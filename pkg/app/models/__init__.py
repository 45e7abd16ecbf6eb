"""
Domain models package.
"""

from .configuration import CoordVector, DualConfig, OccupationState, Site, Window
from .local_function import BasisExpansion, LocalFunctionSpec
from .params import DensityProfile, KernelSpec, PolyParams, SimConfig, TestFunction
from .run_config import RunConfig
from .tables import KernelTable, Trajectory

__all__ = [
    "BasisExpansion",
    "CoordVector",
    "DensityProfile",
    "DualConfig",
    "KernelSpec",
    "KernelTable",
    "LocalFunctionSpec",
    "OccupationState",
    "PolyParams",
    "RunConfig",
    "SimConfig",
    "Site",
    "TestFunction",
    "Trajectory",
    "Window",
]
