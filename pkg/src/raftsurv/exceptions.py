"""Exception hierarchy shared across the toolkit."""


class RaftSurvError(Exception):
    """Base class for all errors raised by raftsurv."""


class DomainError(RaftSurvError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class InsufficientDataError(RaftSurvError, ValueError):
    """Too few observations to fit the requested model."""


class DegenerateDataError(RaftSurvError, ValueError):
    """The data carry no information about the quantity of interest (e.g. no events)."""


class IdentifiabilityError(RaftSurvError, ValueError):
    """One or more parameters cannot be identified from the data.

    Parameters
    ----------
    message : str
        Human readable description.
    columns : sequence of str, optional
        Names of the offending design columns or covariates.
    """

    def __init__(self, message, columns=()):
        self.columns = tuple(columns)
        if self.columns:
            message = f"{message} (columns: {', '.join(self.columns)})"
        super().__init__(message)


class UnsupportedConfigurationError(RaftSurvError, ValueError):
    """The requested combination of options is not implemented."""


class EvaluationError(RaftSurvError, FloatingPointError):
    """The log-likelihood or its derivatives evaluated to a non-finite value."""


class DegenerateConditioningError(RaftSurvError, ValueError):
    """Conditioning on survival to entry age is numerically impossible."""


class MedianOverflowError(RaftSurvError, OverflowError):
    """The median time to event lies beyond the representable range."""


class EmptyGridError(RaftSurvError, ValueError):
    """A Brier score grid contains no subject-year cells."""


class ConfigError(RaftSurvError, ValueError):
    """Invalid generator or evaluation configuration.

    Parameters
    ----------
    message : str
        Description of the problem.
    field : str, optional
        Name of the offending configuration field.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class CohortFormatError(RaftSurvError, ValueError):
    """A cohort file violates the expected schema."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
