"""Finite-window workbench for uniform Roe algebras of discrete metric spaces."""

from .config import DEFAULT, Tolerances
from .metric_space import (
    SpaceSpec,
    Window,
    ball,
    ball_cardinality,
    boundary_set,
    distance,
    is_r_sparse,
    realize_window,
    validate_metric,
)
from .roe_operator import (
    SparseOperator,
    adjoint,
    add,
    compose,
    finitize_columns,
    invert,
    operator_norm,
    propagation,
    scale,
    sparse_corner_decompose,
    unitary_retraction,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT", "Tolerances", "SpaceSpec", "Window", "ball", "ball_cardinality",
    "boundary_set", "distance", "is_r_sparse", "realize_window", "validate_metric",
    "SparseOperator", "adjoint", "add", "compose", "finitize_columns", "invert",
    "operator_norm", "propagation", "scale", "sparse_corner_decompose",
    "unitary_retraction",
]
