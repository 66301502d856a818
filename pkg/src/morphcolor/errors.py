"""Exception types raised across the package."""


class MorphColorError(Exception):
    """Base class for all package errors."""


class SizeError(MorphColorError, ValueError):
    """Field dimensions are too small or do not match."""


class DegenerateInputError(MorphColorError, ValueError):
    """Input statistics make an operation undefined (e.g. zero variance)."""


class DivergenceError(MorphColorError, RuntimeError):
    """An iterative solver produced a non-finite value."""


class NonDiffeomorphicError(MorphColorError, RuntimeError):
    """A deformation step folded: its Jacobian determinant is not positive."""
