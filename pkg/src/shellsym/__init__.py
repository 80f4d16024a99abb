"""Symmetric ground states of p-Laplacian problems on thin spherical shells.

Submodules: ``symmetry`` (group actions, orbit lengths, tube distances),
``reduction`` (the 3D chart and its checks), ``grid`` (discretization),
``minimizer`` (constrained descent and scaling sweeps), ``lemmas``
(randomized lemma checks) and ``cli``.
"""
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    InfeasibleError,
    InternalError,
    OrbitDimensionError,
    PreconditionError,
    ShellSymError,
    UnsupportedOperationError,
)
from .grid import Grid3, GridFunction, build_grid, energy_and_grad, mass_and_grad
from .kernels import BACKEND
from .minimizer import MinimizeConfig, MinimizeReport, minimize, sweep_and_fit
from .reduction import ChartBump, chart_to_4d, forward_map_4d, map_special_points, verify_reduction_identity
from .symmetry import (
    Family,
    GroupSpec,
    classify_point,
    orbit_info,
    orbit_length_formula,
    orbit_length_numeric,
    tube_distance,
    tube_distances,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChartBump",
    "ConfigurationError",
    "DegenerateInputError",
    "Family",
    "Grid3",
    "GridFunction",
    "GroupSpec",
    "InfeasibleError",
    "InternalError",
    "MinimizeConfig",
    "MinimizeReport",
    "OrbitDimensionError",
    "PreconditionError",
    "ShellSymError",
    "UnsupportedOperationError",
    "build_grid",
    "chart_to_4d",
    "classify_point",
    "energy_and_grad",
    "forward_map_4d",
    "map_special_points",
    "mass_and_grad",
    "minimize",
    "orbit_info",
    "orbit_length_formula",
    "orbit_length_numeric",
    "sweep_and_fit",
    "tube_distance",
    "tube_distances",
    "verify_reduction_identity",
]
