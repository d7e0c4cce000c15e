"""Exception types shared across the toolkit."""


class SacvError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(SacvError, ValueError):
    """An argument is outside its allowed domain."""


class DataError(SacvError, ValueError):
    """Input data is malformed or violates a dataset invariant."""


class TrainingError(SacvError, RuntimeError):
    """A learner could not be trained on the given data."""


class DimensionError(SacvError, ValueError):
    """Feature dimension of an input does not match the model."""
