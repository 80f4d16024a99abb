"""Exception types shared across the package."""


class ShellSymError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ShellSymError, ValueError):
    """Invalid parameters (group spec, grid, minimizer or lemma inputs)."""


class DegenerateInputError(ShellSymError, ValueError):
    """Input is degenerate for the requested operation (zero vector, zero mass)."""


class UnsupportedOperationError(ShellSymError):
    """The operation is not defined for the given group family or chart."""


class OrbitDimensionError(ShellSymError):
    """The orbit is not one-dimensional, so it has no length."""


class PreconditionError(ShellSymError, ValueError):
    """A documented precondition of a lemma-level operation does not hold."""


class InfeasibleError(ShellSymError, ValueError):
    """No feasible point exists for the requested constraint."""


class InternalError(ShellSymError, RuntimeError):
    """A self-check failed; indicates a bug rather than bad input."""
