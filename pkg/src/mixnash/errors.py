"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input lies outside the set where an operation is defined (e.g. a
    boundary point of the simplex handed to a multiplicative update)."""


class NumericalError(ArithmeticError):
    """A non-finite value appeared during an iteration."""

    def __init__(self, message, **context):
        if context:
            detail = ", ".join(f"{k}={v}" for k, v in context.items())
            message = f"{message} ({detail})"
        super().__init__(message)
        self.context = context


class ConfigError(ValueError):
    """Malformed or incomplete experiment configuration."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
