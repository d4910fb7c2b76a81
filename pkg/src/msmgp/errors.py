"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter violates its documented precondition."""


class InvalidInputError(ValueError):
    """Input data is empty, malformed, or inconsistent."""


class NumericalError(RuntimeError):
    """A linear-algebra routine failed even after jitter escalation."""


class FormatError(ValueError):
    """A file could not be parsed (bad header, unsupported codec, ...)."""


class ConfigError(ValueError):
    """Run configuration is inconsistent with the provided inputs."""
