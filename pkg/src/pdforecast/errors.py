"""Exception hierarchy shared across the toolkit.

Exit-code mapping used by the CLI:
  ConfigError    -> 1 (usage / configuration)
  DataError      -> 2 (bad or insufficient data)
  NumericalError -> 3 (non-finite losses, failed gradient checks)
"""


class ToolkitError(Exception):
    pass


class ConfigError(ToolkitError):
    pass


class InvalidConfig(ConfigError):
    pass


class InvalidWidths(ConfigError):
    pass


class InvalidRate(ConfigError):
    pass


class DataError(ToolkitError):
    pass


class MissingColumn(DataError):
    def __init__(self, name, path=None):
        self.name = name
        self.path = path
        super().__init__(f"missing required column {name!r}"
                         + (f" in {path}" if path else ""))


class RowParseError(DataError):
    def __init__(self, line, reason, path=None):
        self.line = line
        self.reason = reason
        self.path = path
        super().__init__(f"row {line}: {reason}" + (f" ({path})" if path else ""))


class EmptyFile(DataError):
    pass


class EmptyCohort(DataError):
    pass


class TooFewValues(DataError):
    pass


class ZeroVariance(DataError):
    pass


class NonPositiveInput(DataError):
    pass


class AllMissingColumn(DataError):
    pass


class NoObservedEntries(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class BatchTooSmall(DataError):
    pass


class EmptyMask(DataError):
    pass


class LengthMismatch(DataError):
    pass


class EmptyDataset(DataError):
    pass


class NoPairsProduced(DataError):
    pass


class TooFewPatients(DataError):
    pass


class InsufficientOverlap(DataError):
    def __init__(self, col_a, col_b):
        self.col_a = col_a
        self.col_b = col_b
        super().__init__(f"fewer than 2 complete pairs for ({col_a}, {col_b})")


class TooFewSamples(DataError):
    pass


class NoObservedTargets(DataError):
    pass


class NumericalError(ToolkitError):
    pass


class NonFiniteLoss(NumericalError):
    pass


class GradCheckFailed(NumericalError):
    pass
