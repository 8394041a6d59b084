"""Exception hierarchy.

The CLI maps these onto exit codes: parameter/configuration problems
exit 2, data problems exit 3, numerical failures exit 4.
"""


class ActiveStatsError(Exception):
    """Base class for all library errors."""


class ParameterError(ActiveStatsError, ValueError):
    """An argument is outside its documented domain."""


class ConfigurationError(ParameterError):
    """A strategy or study is configured inconsistently."""


class InfeasibleBudgetError(ParameterError):
    """No tuning parameter can satisfy the requested query budget."""


class DataError(ActiveStatsError):
    """Input data is malformed or insufficient."""


class EstimationError(DataError):
    """Not enough data to fit the requested estimator."""


class OracleUnavailableError(DataError):
    """A true-statistic query was attempted but no oracle was supplied."""


class NumericalError(ActiveStatsError):
    """A numerical computation failed or produced an invalid value."""


class DomainError(NumericalError):
    """A computed statistic landed outside its admissible domain."""


class InconsistentDensityError(NumericalError):
    """The null density evaluated below its certified lower bound."""


class SingularDesignError(NumericalError):
    """A regression design matrix is rank deficient."""


class VarianceError(NumericalError):
    """The sandwich variance computation failed."""


class ContractViolationError(ActiveStatsError):
    """A user-supplied hook violated its interface contract."""
