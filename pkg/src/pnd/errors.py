"""Exception types shared across the package."""


class PndError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PndError, ValueError):
    """Operands have incompatible shapes or a non-conforming layout."""


class InputError(PndError, ValueError):
    """Input values are unusable: non-finite entries, unknown ids, empty data."""


class ConfigError(PndError, ValueError):
    """A hyperparameter or configuration value is out of its legal range."""
