"""Learning strategic agents' action-distribution maps for performative prediction."""

__version__ = "0.1.0"

from perfmap.errors import (
    ArgumentError,
    DegenerateModelError,
    IllConditionedError,
    ModelError,
    NumericalError,
    RangeError,
    ShapeError,
)

__all__ = [
    "__version__",
    "ArgumentError",
    "DegenerateModelError",
    "IllConditionedError",
    "ModelError",
    "NumericalError",
    "RangeError",
    "ShapeError",
]
