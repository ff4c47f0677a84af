"""Exception types shared across the package."""


class MixedGraphError(Exception):
    """Base class for all package-specific errors."""


class DegenerateGraphError(MixedGraphError):
    """Graph has zero-degree nodes or is otherwise unusable."""


class PreconditionError(MixedGraphError):
    """An operator does not satisfy the certified properties an operation requires."""


class SingularOperatorError(MixedGraphError):
    """A matrix that must be invertible is singular within tolerance."""


class BalanceError(MixedGraphError):
    """Sinkhorn balancing failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SolverError(MixedGraphError):
    """Iterative solver failed; carries the best iterate found."""

    def __init__(self, message, best_x=None, residual=None, iterations=None):
        super().__init__(message)
        self.best_x = best_x
        self.residual = residual
        self.iterations = iterations


class DegenerateTransformError(MixedGraphError):
    """Transform is singular or back-projects through the plane at infinity."""


class PatchGeometryError(MixedGraphError):
    """Patch footprint is empty, out of bounds, or rank-deficient."""


class ImageIOError(MixedGraphError):
    """Malformed image file; carries the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset
