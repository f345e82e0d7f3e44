"""Exception hierarchy.

Every error raised by the library derives from :class:`HarnackLabError`.
The CLI maps :class:`ValidationError` subclasses to exit code 2 and
:class:`NumericalError` subclasses to exit code 3.
"""

from __future__ import annotations


class HarnackLabError(Exception):
    """Base class for all library errors."""


class ValidationError(HarnackLabError):
    """Bad input: configuration, parameters, or a precondition."""


class NumericalError(HarnackLabError):
    """A run failed numerically."""


class InvalidResolution(ValidationError):
    pass


class InvalidGeometry(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class InvalidParameter(ValidationError):
    pass


class InvalidTime(ValidationError):
    pass


class InvalidWindow(ValidationError):
    pass


class WrongEquation(ValidationError):
    pass


class ResolutionError(ValidationError):
    pass


class ConfigError(ValidationError):
    """Configuration document failed validation; ``field`` names the key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class DomainError(ValidationError):
    pass


class CorruptedState(NumericalError):
    pass


class CFLError(NumericalError):
    pass


class BlowupError(NumericalError):
    def __init__(self, message: str, t: float | None = None, step: int | None = None):
        super().__init__(message)
        self.t = t
        self.step = step


class InterpolationError(NumericalError):
    pass


class InvalidQuery(ValidationError):
    pass
