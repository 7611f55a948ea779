"""Exception types shared across the package."""


class HcdError(Exception):
    """Base class for all library errors."""


class ConfigError(HcdError):
    """Invalid configuration value or inconsistent option combination."""


class InputError(HcdError):
    """Rejected input data (non-finite pixels, bad labels, bad shapes)."""


class ParseError(HcdError):
    """Malformed file. Carries file path and byte offset context when known."""

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        prefix = ""
        if path is not None:
            prefix += f"{path}: "
        if offset is not None:
            prefix += f"(offset {offset}) "
        super().__init__(prefix + message)


class DegenerateRoIError(HcdError):
    """RoI has no overlap with the image."""


class DimensionMismatchError(HcdError):
    """Feature vector length does not match the classifier's expectation."""

    def __init__(self, expected, actual):
        self.expected = expected
        self.actual = actual
        super().__init__(f"feature dimension mismatch: expected {expected}, got {actual}")


class UndefinedMetricError(HcdError):
    """Metric is undefined (e.g. no ground truth under the active subset)."""
