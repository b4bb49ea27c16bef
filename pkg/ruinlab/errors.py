"""Exception hierarchy shared by every ruinlab module."""


class RuinlabError(Exception):
    """Base class for all ruinlab failures."""


class ModelError(RuinlabError, ValueError):
    """An argument or model input outside the documented domain."""


class ConfigError(RuinlabError, ValueError):
    """A model or experiment file that cannot be turned into a valid model."""


class DegenerateChainError(RuinlabError, ArithmeticError):
    """The environment chain has no unique stationary law."""


class QuadratureError(RuinlabError, ArithmeticError):
    """Numerical integration did not produce a usable value."""


class DegenerateSurvivalError(RuinlabError, ArithmeticError):
    """A survival probability used as a denominator is numerically zero."""


class NearDegenerateCorrelationError(RuinlabError, ArithmeticError):
    """Correlation too close to +-1 for the wedge representation."""


class SeriesTruncationError(RuinlabError, ArithmeticError):
    """The Bessel series did not settle before its term cap."""


class DimensionTooLargeError(RuinlabError, ValueError):
    """Too many components for the analytic inclusion-exclusion path."""


class EstimationError(RuinlabError):
    """An estimator failed for one method at one horizon."""

    def __init__(self, method: str, horizon: float, cause: Exception) -> None:
        super().__init__(f"{method} failed at T={horizon:g}: {cause}")
        self.method = method
        self.horizon = horizon
