"""Exception types shared across the package."""


class KreinLabError(Exception):
    """Base class for all errors raised by kreinlab."""


class DomainError(KreinLabError, ValueError):
    """An argument lies outside the domain of an operation."""


class ContractViolation(KreinLabError, ValueError):
    """A documented precondition on the input does not hold."""


class ShiftError(KreinLabError, ArithmeticError):
    """The Krein middle block is singular at the requested spectral shift(s)."""

    def __init__(self, message, lambdas=()):
        super().__init__(message)
        self.lambdas = tuple(lambdas)


class DegenerateElimination(KreinLabError, ArithmeticError):
    """The boundary block of the extension form cannot be eliminated."""


class ResolutionError(KreinLabError, ArithmeticError):
    """Quadrature did not converge within the allowed refinements."""


class NumericError(KreinLabError, ArithmeticError):
    """A dense linear-algebra kernel failed."""
