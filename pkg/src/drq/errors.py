"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or hyperparameter."""


class ShapeError(ValueError):
    """Array dimension does not match what the callee expects."""


class InputError(ValueError):
    """Malformed data passed to an operation (NaN reward, bad probabilities, ...)."""


class StateError(RuntimeError):
    """Operation is not valid in the object's current state."""
