"""Budget-control strategies and regime scaling experiments."""

from .strategies import ControlStrategy, InfeasibleStrategy, ThresholdParams, evaluate_strategy
from .scaling import ScalingExperiment, ScalingTable, loglog_slope, run_scaling

__all__ = [
    "ControlStrategy",
    "InfeasibleStrategy",
    "ThresholdParams",
    "evaluate_strategy",
    "ScalingExperiment",
    "ScalingTable",
    "loglog_slope",
    "run_scaling",
]
