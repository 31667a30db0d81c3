"""Exception types shared across the toolkit."""


class CtsforgeError(Exception):
    """Base class for all toolkit errors."""


class MetadataError(CtsforgeError):
    """Malformed or invalid corpus metadata; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AudioFormatError(CtsforgeError):
    """Unsupported or corrupt audio input."""


class ConfigError(CtsforgeError):
    """Invalid pipeline configuration."""


class TrainingDiverged(CtsforgeError):
    """Non-finite gradients or loss during optimization."""
