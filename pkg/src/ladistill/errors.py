class ConfigurationError(ValueError):
    """Invalid configuration or parameter ranges."""


class SimulationStateError(RuntimeError):
    """Operation not allowed in the current simulator/episode state."""


class TrainingError(RuntimeError):
    """Training produced non-finite or diverging values."""


class ModelFileError(IOError):
    """Malformed model or dataset file."""
