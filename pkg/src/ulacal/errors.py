"""Exception hierarchy shared by all modules."""


class UlacalError(Exception):
    """Base class for errors raised by this package."""


class DomainError(UlacalError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class StructuralError(UlacalError, ValueError):
    """A matrix lacks the structure an operation requires (e.g. not Hermitian)."""


class DegenerateInputError(DomainError):
    """Input is well-formed but carries no usable information for the estimator."""


class DegenerateSpectrumError(DomainError):
    """A polynomial zero sits on the unit circle, so root flipping is ill-posed."""


class InternalError(UlacalError, RuntimeError):
    """A post-condition that should hold analytically was violated numerically."""
