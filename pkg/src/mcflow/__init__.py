"""Numerical laboratory for the continuation of O(4)xO(4)-symmetric mean
curvature flow through its type-II singularity: barrier construction and
verification, glued initial data, and monitored evolution of the singular
profile equation."""

__version__ = "0.1.0"

from .alencar import AlencarProfile, shoot_alencar
from .barriers import (
    BarrierParams,
    BarrierSet,
    build_barrier_set,
    global_excess,
    make_barrier_params,
    search_constants,
    verify_matching,
    verify_nesting,
    verify_residuals,
)
from .config import (
    RunConfig,
    config_from_dict,
    default_config,
    parse_config,
    validate_config,
)
from .errors import ConfigError, IoError, McflowError
from .evolve import (
    BoundaryConditions,
    GlueConfig,
    MeshState,
    MonitorConfig,
    RunTrace,
    build_mesh,
    evolve,
    glued_initial_data,
    mean_curvature,
    second_fundamental_norm,
    step,
    uniform_mesh,
)
from .initial import build_initial_u0
from .params import ModelParams, derive_constants
from .pipeline import run_pipeline
from .special import eigenfunction, solve_g

__all__ = [
    "AlencarProfile",
    "BarrierParams",
    "BarrierSet",
    "BoundaryConditions",
    "ConfigError",
    "GlueConfig",
    "IoError",
    "McflowError",
    "MeshState",
    "ModelParams",
    "MonitorConfig",
    "RunConfig",
    "RunTrace",
    "build_barrier_set",
    "build_initial_u0",
    "build_mesh",
    "config_from_dict",
    "default_config",
    "derive_constants",
    "eigenfunction",
    "evolve",
    "global_excess",
    "glued_initial_data",
    "make_barrier_params",
    "mean_curvature",
    "parse_config",
    "run_pipeline",
    "search_constants",
    "second_fundamental_norm",
    "shoot_alencar",
    "solve_g",
    "step",
    "uniform_mesh",
    "validate_config",
    "verify_matching",
    "verify_nesting",
    "verify_residuals",
]
