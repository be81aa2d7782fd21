"""Mixed-precision multigrid V-cycles with incomplete Cholesky smoothing."""

from .fparith import DOUBLE, HALF, SINGLE, PrecisionOverflow, PrecisionSpec, from_decimal_digits
from .hierarchy import LevelPrecision, MgHierarchy

__version__ = "0.1.0"

__all__ = [
    "DOUBLE",
    "HALF",
    "SINGLE",
    "LevelPrecision",
    "MgHierarchy",
    "PrecisionOverflow",
    "PrecisionSpec",
    "from_decimal_digits",
]
