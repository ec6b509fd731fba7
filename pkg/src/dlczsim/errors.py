"""Exception types shared across the package."""


class ConfigError(Exception):
    """Configuration file cannot be parsed or contains unknown keys."""


class ValidationError(Exception):
    """Configuration violates invariants. Carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InvalidAnalyzerError(ValueError):
    """Analyzer parameters outside their physical domain."""


class CalibrationInfeasibleError(Exception):
    """Requested calibration target cannot be reached by any parameter value."""


class TagFormatError(Exception):
    """Malformed tag file. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class TagVersionError(TagFormatError):
    """Tag file magic or format version does not match this reader."""


class StreamOrderError(Exception):
    """Tag stream violates the (trial_id, channel, time) ordering contract."""


class UndefinedStatisticError(Exception):
    """A statistic has no defined value (e.g. zero accidentals in the g2 bin)."""


class FitRankError(Exception):
    """Fit input does not constrain the model (degenerate phase coverage)."""
