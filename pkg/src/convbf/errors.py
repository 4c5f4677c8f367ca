"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class NotFound(LookupError):
    """A searched-for feature (zero, lobe edge, peak) does not exist."""


class UnreachablePosition(ValueError):
    """A desired weight sits on a co-array position with zero multiplicity."""


class NoNontrivialDivisor(InvalidArgument):
    """The integer has no divisor strictly between 1 and itself."""
