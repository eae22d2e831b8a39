"""Exception hierarchy shared by every harmonization stage."""


class HarmonizeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidGeometryError(HarmonizeError, ValueError):
    pass


class EmptyInputError(HarmonizeError, ValueError):
    pass


class DomainError(HarmonizeError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class EmptyVariogramError(HarmonizeError):
    pass


class InsufficientDataError(HarmonizeError):
    pass


class FitFailureError(HarmonizeError):
    pass


class SingularSystemError(HarmonizeError):
    pass


class NumericalFailureError(HarmonizeError):
    pass


class SelectionFailureError(HarmonizeError):
    pass


class CrosswalkError(HarmonizeError, ValueError):
    pass


class UnmappedUnitError(HarmonizeError, KeyError):
    def __init__(self, offenders):
        self.offenders = sorted(offenders)
        super().__init__(f"units absent from crosswalk: {', '.join(map(str, self.offenders))}")

    def __str__(self):
        return self.args[0]


class UnmappedClassError(HarmonizeError, KeyError):
    def __init__(self, codes):
        self.codes = sorted(codes, key=str)
        super().__init__(f"class codes without a reclassification entry: {self.codes}")

    def __str__(self):
        return self.args[0]


class CoverageOverflowError(HarmonizeError):
    pass


class ScheduleGapError(HarmonizeError, KeyError):
    def __str__(self):
        return self.args[0]


class MarginMismatchError(HarmonizeError):
    pass


class InfeasibleSupportError(HarmonizeError):
    pass


class RakeDivergenceError(HarmonizeError):
    pass


class UnweightedObservationError(HarmonizeError):
    pass


class GvfUnavailableError(HarmonizeError):
    pass


class CollisionError(HarmonizeError):
    pass


class ConfigError(HarmonizeError):
    pass


class MissingInputError(HarmonizeError, FileNotFoundError):
    """A referenced input file does not exist."""


class TableFormatError(HarmonizeError, ValueError):
    """An input table lacks required columns or holds unparsable values."""


class ValidationFailure(HarmonizeError):
    """Plausibility checks reported violations under the strict flag."""
