"""Survivor-count scaling across N for the three economy regimes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import particle as _particle
from ..analytics import (
    UR_UPPER,
    EconomyParams,
    budget_bound_negative,
    limit_survival_fraction,
    scaling_constants,
)
from ..core import ConfigError, InitialDistribution, LossFunction, RngConfig, TimeGrid
from .strategies import ControlStrategy

REGIMES = ("negative", "neutral", "positive")


@dataclass(frozen=True)
class ScalingExperiment:
    """One strategy run over a grid of N.

    The horizon for size N is max(horizon, horizon_per_n * N); ``replications`` is
    either one count for all N or one count per N.
    """

    regime: str
    N_grid: tuple
    economy: EconomyParams
    G: LossFunction
    theta: InitialDistribution
    strategy: ControlStrategy = field(default_factory=ControlStrategy)
    replications: int | tuple = 100
    step: float = 0.01
    growth: float = 0.02
    horizon: float = 30.0
    horizon_per_n: float = 0.0
    seed: int = 0
    bridge: bool = True
    stop_when_resolved: bool = True

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown regime {self.regime!r}")
        Ns = list(self.N_grid)
        if not Ns or any(b <= a for a, b in zip(Ns, Ns[1:])) or Ns[0] < 1:
            raise ConfigError("N_grid must be a strictly increasing list of positive counts")
        if not isinstance(self.replications, int) and len(self.replications) != len(Ns):
            raise ConfigError("replications must be a count or one count per N")

    def reps(self, i: int) -> int:
        return self.replications if isinstance(self.replications, int) else int(self.replications[i])

    def grid(self, N: int) -> TimeGrid:
        return TimeGrid(max(self.horizon, self.horizon_per_n * N), self.step, self.growth)


@dataclass
class ScalingTable:
    regime: str
    N: np.ndarray
    S_lower: np.ndarray
    S_mid: np.ndarray
    S_upper: np.ndarray
    stderr: np.ndarray
    reference: np.ndarray
    slope: float
    slope_stderr: float
    references: dict
    results: list

    def rows(self):
        for i in range(len(self.N)):
            yield (int(self.N[i]), float(self.S_lower[i]), float(self.S_mid[i]), float(self.S_upper[i]),
                   float(self.stderr[i]), float(self.reference[i]))


def check_regime(exp: ScalingExperiment):
    beta = exp.economy.beta
    if exp.regime == "negative" and not beta < 0:
        raise ConfigError(f"negative regime needs beta < 0, got beta={beta}")
    if exp.regime == "neutral":
        if beta != 0:
            raise ConfigError(f"neutral regime needs beta = 0, got beta={beta}")
        if not math.isfinite(exp.theta.support[1]):
            raise ConfigError("neutral regime needs a compactly supported initial law")
    if exp.regime == "positive":
        if not beta > 0:
            raise ConfigError(f"positive regime needs beta > 0, got beta={beta}")
        if exp.G.cap != 0:
            raise ConfigError("positive regime needs alpha = 0 (no contagion)")


def loglog_slope(N, S, se=None) -> tuple[float, float]:
    """Least-squares slope of log S on log N with its standard error.

    Defined as 0 when every S is exactly 0 (nothing survives at any size);
    NaN when only some are 0.
    """
    N = np.asarray(N, dtype=float)
    S = np.asarray(S, dtype=float)
    if np.all(S == 0):
        return 0.0, 0.0
    if np.any(S <= 0):
        return float("nan"), float("nan")
    x, y = np.log(N), np.log(S)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    if len(N) < 3:
        return float(coef[0]), 0.0
    resid = y - A @ coef
    s2 = float(resid @ resid) / (len(N) - 2)
    return float(coef[0]), math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))


def references(exp: ScalingExperiment, N) -> tuple[np.ndarray, dict]:
    N = np.asarray(N, dtype=float)
    beta = exp.economy.beta
    if exp.regime == "negative":
        b = budget_bound_negative(beta)
        return np.full(len(N), b), {"bound": b}
    if exp.regime == "neutral":
        alpha = exp.G.alpha if exp.G.kind == "linear" else exp.economy.alpha
        c = scaling_constants(alpha)
        return UR_UPPER * np.sqrt(N), {"c_alpha": c.c_alpha, "ur_upper": UR_UPPER, "theta_star": c.theta_star,
                                       "theta_value": c.theta_value, "rho": c.rho}
    f = limit_survival_fraction(beta, exp.theta)
    return f * N, {"fraction": f}


def run_scaling(exp: ScalingExperiment, workers: int = 1) -> ScalingTable:
    check_regime(exp)
    rows = []
    results = []
    for i, N in enumerate(exp.N_grid):
        cfg = _particle.SimConfig(
            N=int(N), economy=exp.economy, G=exp.G, theta=exp.theta, grid=exp.grid(int(N)),
            rng=RngConfig(exp.seed + i), strategy=exp.strategy, replications=exp.reps(i),
            bridge=exp.bridge, stop_when_resolved=exp.stop_when_resolved,
        )
        r = _particle.simulate(cfg, workers)
        lo, mid, hi = r.mean("lower"), r.mean("midpoint"), r.mean("upper")
        err = math.hypot(r.stderr("midpoint"), 0.5 * (hi - lo))
        rows.append((lo, mid, hi, err))
        results.append(r)
    arr = np.array(rows)
    Ns = np.array(exp.N_grid, dtype=np.int64)
    slope, slope_se = loglog_slope(Ns, arr[:, 1])
    ref, refs = references(exp, Ns)
    return ScalingTable(exp.regime, Ns, arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], ref, slope, slope_se, refs,
                        results)
