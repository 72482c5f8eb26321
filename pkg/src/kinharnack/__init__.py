"""Numerical laboratory for the failure of the Harnack inequality for the
fractional Kolmogorov equation ``v . grad_x f + (-Delta_v)^s f = 0``."""

from kinharnack.core import (
    DomainError,
    Geometry,
    InvalidParameterError,
    Params,
    PhaseBox,
    PhasePoint,
    ResolutionError,
    contains,
    evaluation_points,
    make_geometry,
)

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "Geometry",
    "InvalidParameterError",
    "Params",
    "PhaseBox",
    "PhasePoint",
    "ResolutionError",
    "contains",
    "evaluation_points",
    "make_geometry",
    "__version__",
]
