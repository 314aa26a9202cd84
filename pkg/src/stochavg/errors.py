"""Exception types shared across the package."""


class StochavgError(Exception):
    """Base class for all package errors."""


class ParseError(StochavgError):
    """Raised on malformed expression text; carries the offending position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class NonPolynomialError(StochavgError):
    """An operation required a polynomial form that the input does not have."""


class NotPSDError(StochavgError):
    """A matrix expected to be positive semi-definite is not (beyond tolerance)."""


class StepTooLargeError(StochavgError):
    """Integration step violates the fast-oscillation resolution guard."""


class NonFiniteError(StochavgError):
    """A sample path left the finite range; never silently censored."""

    def __init__(self, message, path_index=None, time=None):
        super().__init__(message)
        self.path_index = path_index
        self.time = time


class ConfigError(StochavgError):
    """Configuration file or experiment parameters violate the schema."""
