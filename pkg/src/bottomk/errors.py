"""Exception hierarchy shared by the library and the CLI."""


class BottomKError(Exception):
    """Base class for all package errors."""


class InputError(BottomKError, ValueError):
    """Invalid user-supplied data (items, sketches, parameters)."""


class DomainError(InputError):
    """Numeric argument outside the domain of a function."""


class SketchFormatError(InputError):
    """A serialized sketch or CSV file could not be parsed.

    ``location`` names the offending field or ``file:line``.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class PredicateError(InputError):
    """A predicate could not be parsed or evaluated on an item."""


class SketchStateError(BottomKError, RuntimeError):
    """Operation requires sketch state that is absent (e.g. no r_{k+1})."""


class CapabilityError(BottomKError):
    """Estimator or bound not applicable to this sketch family or size."""


class ConfigError(BottomKError):
    """Invalid experiment or CLI configuration."""


class MonotonicityError(BottomKError, ArithmeticError):
    """A bracketed root search found a function that is not monotone."""
