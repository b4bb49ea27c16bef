"""
ruinlab: finite-time ruin probabilities for multivariate risk processes in a
Markovian environment.

Three estimators share one model: exact Monte Carlo (``simulate``), the
diffusion approximation (``diffusion``) and the single-switch approximation
(``switch``).
"""

from .diffusion import DiffusionEstimate, multivariate_ruin_diffusion
from .errors import ConfigError, ModelError, RuinlabError
from .model import ClaimDistribution, EnvironmentModel, RiskModel, RuinMode, RuinQuery, validate
from .simulate import MonteCarloEstimate, estimate_ruin
from .switch import chi

__version__ = "0.1.0"

__all__ = [
    "ClaimDistribution",
    "ConfigError",
    "DiffusionEstimate",
    "EnvironmentModel",
    "ModelError",
    "MonteCarloEstimate",
    "RiskModel",
    "RuinMode",
    "RuinQuery",
    "RuinlabError",
    "chi",
    "estimate_ruin",
    "multivariate_ruin_diffusion",
    "validate",
]
