"""Exception types raised by satdwell."""


class InvalidArgumentError(ValueError):
    """Input violates an operation's precondition (shape, range, finiteness)."""


class DomainError(ValueError):
    """A point lies outside the region where a representation is valid."""


class UnsupportedDimensionError(ValueError):
    """Operation is only defined for a particular state dimension."""


class NumericalFailure(RuntimeError):
    """A numerical step (inversion, factorization) could not be carried out reliably."""
