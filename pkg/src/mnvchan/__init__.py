"""Vehicular multi-link channel simulation, statistics, DPS interpolation and PER evaluation."""

from ._accel import BACKEND
from .errors import FormatError, NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = ["BACKEND", "FormatError", "NumericalError", "ValidationError", "__version__"]
