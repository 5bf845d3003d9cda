"""Exception types shared across the package."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class ShapeError(ContractError):
    """Operand shapes do not conform."""


class DomainError(ContractError):
    """A value lies outside the domain of a function (e.g. log of a non-positive)."""


class NonFiniteError(ContractError):
    """A loss term or statistic evaluated to NaN or infinity."""
