"""Branching Brownian motion on the hyperbolic plane.

Monte Carlo simulation of hyperbolic BBM (Yule genealogy + hyperbolic
Brownian motion along the edges) with estimators for its asymptotic laws.
"""

__version__ = "0.1.0"

from hypbbm.errors import (
    InsufficientData,
    OutOfHorizon,
    OverflowNearBoundary,
    ParseError,
    PopulationCapExceeded,
    UnknownAddress,
    ValidationError,
    WrongRegime,
)
from hypbbm.geometry import (
    BoundaryPoint,
    DiskPoint,
    HalfPlanePoint,
    MoebiusMap,
)
from hypbbm.rng import RandomStream

__all__ = [
    "BoundaryPoint",
    "DiskPoint",
    "HalfPlanePoint",
    "InsufficientData",
    "MoebiusMap",
    "OutOfHorizon",
    "OverflowNearBoundary",
    "ParseError",
    "PopulationCapExceeded",
    "RandomStream",
    "UnknownAddress",
    "ValidationError",
    "WrongRegime",
    "__version__",
]
