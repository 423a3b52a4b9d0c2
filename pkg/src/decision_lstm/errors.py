"""Exception hierarchy.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class DecisionLSTMError(Exception):
    pass


class ConfigError(DecisionLSTMError, ValueError):
    """Bad user configuration (flags, hyperparameters, split sizes)."""


class DataError(DecisionLSTMError, ValueError):
    """Malformed or inconsistent input data."""


class DimensionError(DataError):
    pass


class ParseError(DataError):
    pass


class LengthError(DataError):
    pass


class GapError(DataError):
    pass


class EncodingError(DataError):
    pass


class DegenerateTrajectoryError(DataError):
    pass


class GameKindError(DataError):
    pass


class CompatibilityError(DataError):
    """Checkpoint and dataset disagree on game kind or dimensions."""


class UnknownSchemeError(ConfigError):
    pass


class SpecValidationError(ConfigError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid game spec: " + "; ".join(self.violations))


class NumericError(DecisionLSTMError, ArithmeticError):
    pass
