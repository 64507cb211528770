"""Exception types raised by gmcopula."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DimensionError(ValueError):
    """Array shapes or dimensions do not agree."""


class NotPositiveDefiniteError(ValueError):
    """A correlation or covariance matrix failed the positive-definiteness check."""


class ConstraintViolation(ValueError):
    """Mixture parameters violate an identifiability or validity constraint."""

    def __init__(self, name, message):
        super().__init__(f"{name}: {message}")
        self.name = name
        self.message = message


class DegenerateFitError(RuntimeError):
    """Every optimizer start ended at the -inf likelihood sentinel."""
