"""LAD and OLS estimation for AR(1) processes with roots close to unity."""

from .errors import DegenerateError, ExplosionError, NumericalError, RegimeError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "DegenerateError",
    "ExplosionError",
    "NumericalError",
    "RegimeError",
    "ValidationError",
    "__version__",
]
