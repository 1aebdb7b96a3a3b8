"""Exception types shared across the package."""


class GroundcapError(Exception):
    """Base class for all errors raised by this package."""


class DataError(GroundcapError):
    """Malformed, inconsistent, or missing input data."""


class ConfigError(GroundcapError):
    """Invalid configuration value or incompatible dimension settings."""


class TrainingError(GroundcapError):
    """Training aborted (e.g. non-finite loss)."""
