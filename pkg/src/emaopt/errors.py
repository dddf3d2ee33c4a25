"""Exception types shared across the package."""


class DimensionMismatchError(ValueError):
    """Two arrays that must share a length do not."""


class NonFiniteError(ValueError):
    """A NaN or infinity reached a computation that requires finite values."""


class CapabilityError(RuntimeError):
    """The operation is not supported for this combination of inputs."""


class DomainError(ValueError):
    """A parameter lies outside the domain where a formula or method is valid."""


class ConfigError(DomainError):
    """An experiment configuration file is malformed or inconsistent."""
