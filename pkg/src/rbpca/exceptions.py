"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument is outside its admissible range."""


class DataError(ValueError):
    """Input data is malformed or incompatible with a fitted model."""


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or produced unusable output."""
