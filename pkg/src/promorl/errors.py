"""Exception hierarchy shared across the package."""


class PromorlError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(PromorlError, ValueError):
    pass


class InvalidConfigurationError(PromorlError, ValueError):
    pass


class DegenerateReturnError(PromorlError, ValueError):
    """An episode return cannot be L1-normalized (all zero or negative)."""


class IllegalTransitionError(PromorlError, RuntimeError):
    """Stepping an environment state that is already terminal."""


class UnsupportedError(PromorlError, NotImplementedError):
    pass


class ParseError(PromorlError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegrityError(PromorlError, ValueError):
    pass


class NumericalError(PromorlError, ArithmeticError):
    pass


class NonFiniteGradientError(NumericalError):
    def __init__(self, param_name):
        self.param_name = param_name
        super().__init__(f"non-finite gradient for parameter {param_name!r}")


class TrainingDivergedError(NumericalError):
    """Raised when a loss becomes non-finite; carries a diagnostic snapshot."""

    def __init__(self, message, snapshot=None):
        self.snapshot = snapshot or {}
        super().__init__(message)
