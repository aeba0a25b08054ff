"""Exception hierarchy. Exit codes: 2 config, 3 data, 4 numeric."""


class FibertrapError(Exception):
    """Base class for all toolkit errors."""

    category = "error"
    exit_code = 1


class ConfigError(FibertrapError):
    category = "config"
    exit_code = 2


class SchemaError(ConfigError):
    """A required field is missing or has the wrong type."""


class ValidationError(ConfigError):
    """A field is present but violates an invariant."""


class UnknownKeyError(ConfigError):
    """A config document contains a key the schema does not define."""


class UnitError(ConfigError):
    """A config value does not match the unit its key suffix declares."""


class DataError(FibertrapError):
    category = "data"
    exit_code = 3


class IngestionError(DataError):
    """A data file is malformed (bad header, out-of-order grid, ...)."""


class InconsistentTracesError(DataError):
    """Reference/atoms traces imply negative absorbed energy beyond noise."""


class SaturatedMeasurementError(DataError):
    """Zero transmitted intensity: the OD is only bounded from below."""


class SpeciesLookupError(DataError):
    """Requested hyperfine level or transition does not exist."""


class NumericError(FibertrapError):
    category = "numeric"
    exit_code = 4


class DomainError(NumericError):
    """An argument lies outside the mathematical domain of the operation."""


class DegenerateFitError(NumericError):
    """The fit problem has an unidentifiable parameter."""

    def __init__(self, message, parameter=None):
        super().__init__(message)
        self.parameter = parameter


class NotConvergedError(NumericError):
    """An operation requires a converged fit but got a non-converged one."""


class TooFewReplicatesWarning(UserWarning):
    """Bootstrap called with too few replicates for a meaningful spread."""
