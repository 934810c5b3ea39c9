"""Exception types shared across the package."""


class PerfmapError(Exception):
    """Base class for all package errors."""


class ArgumentError(PerfmapError, ValueError):
    """An argument is outside the documented domain."""


class ModelError(PerfmapError, ValueError):
    """A model specification is internally inconsistent (e.g. non-PSD covariance)."""


class ShapeError(PerfmapError, ValueError):
    """A function violates a required shape constraint such as monotonicity."""


class RangeError(PerfmapError, ValueError):
    """A requested value lies outside the attainable range."""


class IllConditionedError(PerfmapError, ArithmeticError):
    """A linear system is too close to singular to invert reliably."""


class DegenerateModelError(PerfmapError, ValueError):
    """A fitted model is degenerate and cannot be evaluated."""


class NumericalError(PerfmapError, ArithmeticError):
    """An iterative solver failed to converge.

    The ``diagnostics`` attribute carries solver state useful for debugging.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
