"""Density-based 2D topology optimization with compliance, volume and buckling criteria."""

from .assembly import Interpolation, assemble_G, assemble_K, centroid_stress, compute_Z
from .design import ContinuationSchedule, DensityFilter, project, volume_preserving_eta
from .grid import GridModel, build_indices, element_stiffness
from .optimizer import OptimizationDriver, ProblemSpec, oc_update
from .presets import preset_compressed_column, preset_wall
from .sensitivity import ks_grad, ks_value
from .solvers import BucklingSolution, FactorizedOperator, buckling_eigs, dense_buckling_eigs

__version__ = "0.1.0"

__all__ = [
    "GridModel",
    "build_indices",
    "element_stiffness",
    "DensityFilter",
    "ContinuationSchedule",
    "project",
    "volume_preserving_eta",
    "Interpolation",
    "assemble_K",
    "assemble_G",
    "compute_Z",
    "centroid_stress",
    "FactorizedOperator",
    "BucklingSolution",
    "buckling_eigs",
    "dense_buckling_eigs",
    "ks_value",
    "ks_grad",
    "ProblemSpec",
    "OptimizationDriver",
    "oc_update",
    "preset_compressed_column",
    "preset_wall",
    "__version__",
]
