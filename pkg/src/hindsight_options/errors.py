"""Exception types shared across the package."""


class ValidationError(ValueError):
    """An input violates a documented precondition or invariant."""


class IrrationalPriceError(ValueError):
    """An observed option price sits below the minimum rational price."""
