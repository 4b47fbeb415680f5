"""Diffeomorphic shape registration and Bayesian calibration toolkit."""

from .errors import (
    IntegrationError,
    InvalidInputError,
    ModelFormatError,
    SamplerError,
    UnsupportedRepresentationError,
)
from .grid import Box, GridGeometry
from .kernels import KernelSpec, convolve_grid, kernel_matrix, velocity_at
from .optim import OptimizerConfig
from .prealign import RigidFit, apply_rigid, fit_mean_rigid, se_exp
from .shapes import (
    CurrentEmbedding,
    CurveShape,
    GridImage,
    LandmarkShape,
    MatchKind,
    MatchSpec,
    Shape,
    curve_from_series,
    dual_action,
    infinitesimal_action,
    match_cost,
)
from .shooting import (
    GeodesicSolution,
    Scheme,
    ShootingConfig,
    deformation_energy,
    hamiltonian,
    initial_velocity,
    integrate_geodesic,
    register,
    shooting_loss,
)

__all__ = [
    "Box",
    "CurrentEmbedding",
    "CurveShape",
    "GeodesicSolution",
    "GridGeometry",
    "GridImage",
    "IntegrationError",
    "InvalidInputError",
    "KernelSpec",
    "LandmarkShape",
    "MatchKind",
    "MatchSpec",
    "ModelFormatError",
    "OptimizerConfig",
    "RigidFit",
    "SamplerError",
    "Scheme",
    "Shape",
    "ShootingConfig",
    "UnsupportedRepresentationError",
    "apply_rigid",
    "convolve_grid",
    "curve_from_series",
    "deformation_energy",
    "dual_action",
    "fit_mean_rigid",
    "hamiltonian",
    "infinitesimal_action",
    "initial_velocity",
    "integrate_geodesic",
    "kernel_matrix",
    "match_cost",
    "register",
    "se_exp",
    "shooting_loss",
    "velocity_at",
]
