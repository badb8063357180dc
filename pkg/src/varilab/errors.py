"""Exception types shared across the package."""


class VarilabError(Exception):
    """Base class for all package errors."""


class DomainError(VarilabError):
    """A query point or parameter lies outside the valid domain."""


class ConvergenceError(VarilabError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BoundaryError(DomainError):
    """A projection foot or solve hit the chart boundary."""


class GeneratorError(VarilabError):
    """Invalid or inconsistent test-data generator parameters."""


class HypothesisError(VarilabError):
    """A quantitative hypothesis required by a pipeline stage failed.

    ``name`` identifies the failed hypothesis, ``value``/``bound`` carry the
    measured quantity and the bound it violated.
    """

    def __init__(self, name, value=None, bound=None, message=None):
        self.name = name
        self.value = value
        self.bound = bound
        if message is None:
            message = f"hypothesis '{name}' failed: value={value!r}, bound={bound!r}"
        super().__init__(message)


class ClusterAmbiguityError(HypothesisError):
    """Fiber multiplicity rounding fell inside the guard band."""

    def __init__(self, value, bound, message=None):
        super().__init__("fiber-multiplicity-rounding", value, bound, message)


class UsageError(VarilabError):
    """Bad CLI usage or malformed configuration."""
