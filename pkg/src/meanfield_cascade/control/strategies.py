"""Budget-control strategies: one unit of extra drift split across surviving banks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import ConfigError

FEAS_TOL = 1e-12
KINDS = ("zero", "uniform", "threshold", "custom")


class InfeasibleStrategy(RuntimeError):
    """A strategy produced an allocation outside the budget set."""


@dataclass(frozen=True)
class ThresholdParams:
    m: int
    target_level: float
    rate: float


@dataclass(frozen=True)
class ControlStrategy:
    """Allocation rule.

    ``threshold``: a bank gets nothing until its capital reaches ``target_level``;
    the first ``m`` banks to do so receive ``rate`` from then on, permanently.
    Defaults: m = round(theta * sqrt(N)), target N/m, rate 1/m. ``theta`` of None
    means the maximizer of theta*(1 - exp(-2/theta^2)).

    ``custom``: ``rule(levels, alive, t)`` returns an allocation for one
    replication; it is checked for feasibility at every call.
    """

    kind: str = "zero"
    m: int | None = None
    target_level: float | None = None
    rate: float | None = None
    theta: float | None = None
    rule: Callable | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "custom" and self.rule is None:
            raise ConfigError("custom strategy needs a rule")
        if self.m is not None and self.m < 1:
            raise ConfigError("threshold m must be at least 1")
        if self.rate is not None and not 0 < self.rate <= 1:
            raise ConfigError("threshold rate must lie in (0, 1]")
        if self.target_level is not None and not self.target_level > 0:
            raise ConfigError("threshold target level must be positive")
        if self.theta is not None and not self.theta > 0:
            raise ConfigError("threshold theta must be positive")

    @classmethod
    def zero(cls) -> ControlStrategy:
        return cls("zero")

    @classmethod
    def uniform(cls) -> ControlStrategy:
        return cls("uniform")

    @classmethod
    def threshold(cls, m=None, target_level=None, rate=None, theta=None) -> ControlStrategy:
        return cls("threshold", m=m, target_level=target_level, rate=rate, theta=theta)

    @classmethod
    def custom(cls, rule: Callable) -> ControlStrategy:
        return cls("custom", rule=rule)

    def threshold_params(self, N: int) -> ThresholdParams:
        if self.kind != "threshold":
            raise ConfigError("threshold parameters requested for a non-threshold strategy")
        if self.m is not None:
            m = int(self.m)
        else:
            if self.theta is None:
                from ..analytics import scaling_constants

                theta = scaling_constants(0.0).theta_star
            else:
                theta = self.theta
            m = max(1, int(round(theta * math.sqrt(N))))
        rate = 1.0 / m if self.rate is None else float(self.rate)
        target = N / m if self.target_level is None else float(self.target_level)
        if rate * m > 1 + FEAS_TOL:
            raise ConfigError(f"threshold rate {rate} times m={m} exceeds the unit budget")
        return ThresholdParams(m, target, rate)


# ---------------------------------------------------------------------------
# batched evaluation on (replications, particles) arrays
# ---------------------------------------------------------------------------


def allocate(strategy: ControlStrategy, levels, alive, flags=None, nflag=None, params=None, t=0.0):
    """Allocation for a block of replications; rows are replications.

    For threshold strategies ``flags`` (bool, same shape) and ``nflag`` (flags ever
    set per row, counting dead particles) are updated in place before allocating.
    """
    if strategy.kind == "zero":
        return np.zeros(levels.shape)
    if strategy.kind == "uniform":
        n = alive.sum(axis=1, keepdims=True)
        return np.where(alive, 1.0 / np.maximum(n, 1), 0.0)
    if strategy.kind == "threshold":
        p = params
        room = p.m - nflag
        if np.any(room > 0):
            cand = alive & ~flags & (levels >= p.target_level)
            if cand.any():
                # lowest index first, at most `room` per row
                take = cand & (np.cumsum(cand, axis=1) <= room[:, None])
                flags |= take
                nflag += take.sum(axis=1)
        return np.where(flags & alive, p.rate, 0.0)
    out = np.empty(levels.shape)
    for r in range(levels.shape[0]):
        out[r] = check_allocation(strategy.rule(levels[r], alive[r], t), alive[r])
    return out


def check_allocation(a, alive) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != alive.shape:
        raise InfeasibleStrategy(f"allocation has shape {a.shape}, expected {alive.shape}")
    if not np.all(np.isfinite(a)) or np.any(a < 0) or np.any(a > 1):
        raise InfeasibleStrategy("allocation entries must lie in [0, 1]")
    if a.sum() > 1 + FEAS_TOL:
        raise InfeasibleStrategy(f"allocation sums to {a.sum()} > 1")
    if np.any(a[~alive] != 0):
        raise InfeasibleStrategy("allocation given to a defaulted bank")
    return a


def future_bounds(strategy: ControlStrategy, alive, flags=None, nflag=None, params=None):
    """Per-particle (min, max) of the allocation any alive bank can receive from now on."""
    zero = np.zeros(alive.shape)
    if strategy.kind == "zero":
        return zero, zero
    if strategy.kind == "uniform":
        n = alive.sum(axis=1, keepdims=True)
        return np.where(alive, 1.0 / np.maximum(n, 1), 0.0), np.where(alive, 1.0, 0.0)
    if strategy.kind == "threshold":
        p = params
        on = flags & alive
        lo = np.where(on, p.rate, 0.0)
        open_ = (nflag < p.m)[:, None]
        hi = np.where(on | (alive & open_), p.rate, 0.0)
        return lo, hi
    return zero, np.where(alive, 1.0, 0.0)


def evaluate_strategy(strategy: ControlStrategy, state) -> np.ndarray:
    """Feasible allocation for one replication; threshold flags live on ``state``."""
    levels = state.levels[None, :]
    alive = state.alive[None, :]
    N = len(state.levels)
    if strategy.kind == "threshold":
        params = strategy.threshold_params(N)
        if state.flags is None:
            state.flags = np.zeros(N, dtype=bool)
        flags = state.flags[None, :]
        nflag = np.array([int(state.flags.sum())])
        out = allocate(strategy, levels, alive, flags, nflag, params)
        state.flags = flags[0]
        return out[0]
    return allocate(strategy, levels, alive, t=state.time)[0]
