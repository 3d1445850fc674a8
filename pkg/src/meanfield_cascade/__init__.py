"""Mean-field particle systems with default cascades: simulation, limit solvers, budget control."""

from .analytics import EconomyParams
from .core import (
    ConfigError,
    DomainError,
    InitialDistribution,
    LossCurve,
    LossFunction,
    RngConfig,
    TimeGrid,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "EconomyParams",
    "InitialDistribution",
    "LossCurve",
    "LossFunction",
    "RngConfig",
    "TimeGrid",
]
