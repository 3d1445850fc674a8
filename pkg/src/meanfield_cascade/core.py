"""Shared domain types: loss functions, loss curves, initial laws, time grids, RNG streams.

Loss curves are right-continuous step functions on a time grid, equal to 0 before
time 0. The same type carries the empirical loss of the particle system and the
limit loss of the McKean-Vlasov equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LOG_ETA = 1e-6
LEVY_TOL = 1e-6
LEVY_MAX_ITER = 40

# spawn-key prefixes, one per consumer of randomness
STREAM_PARTICLE = 1
STREAM_MKV = 2
STREAM_SAMPLE = 3


class DomainError(ValueError):
    """Argument outside the domain of a function."""


class ConfigError(ValueError):
    """Invalid model or run configuration."""


# ---------------------------------------------------------------------------
# loss functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LossFunction:
    """Contagion map G on [0, 1]: nondecreasing, continuous, G(0) = 0.

    Build with :meth:`linear`, :meth:`log` or :meth:`tabulated`. Calling the
    object evaluates G elementwise without domain checks (hot path); use
    :func:`eval_loss` for validated evaluation.
    """

    kind: str
    alpha: float = 0.0
    knots: tuple[tuple[float, float], ...] = ()
    eta: float = LOG_ETA

    def __post_init__(self):
        if self.kind not in ("linear", "log", "tabulated"):
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.kind in ("linear", "log"):
            if not (self.alpha >= 0 and math.isfinite(self.alpha)):
                raise ConfigError(f"loss alpha must be a finite nonnegative number, got {self.alpha}")
        if self.kind == "log" and not 0 < self.eta < 1:
            raise ConfigError("log loss needs 0 < eta < 1")
        if self.kind == "tabulated":
            xs = [k[0] for k in self.knots]
            ys = [k[1] for k in self.knots]
            if len(xs) < 2 or xs[0] != 0.0 or xs[-1] != 1.0:
                raise ConfigError("tabulated loss knots must start at x=0 and end at x=1")
            if ys[0] != 0.0:
                raise ConfigError("tabulated loss must satisfy G(0) = 0")
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ConfigError("tabulated loss knots must be strictly increasing in x")
            if any(b < a for a, b in zip(ys, ys[1:])):
                raise ConfigError("tabulated loss values must be nondecreasing")

    @classmethod
    def linear(cls, alpha: float) -> LossFunction:
        return cls("linear", alpha=float(alpha))

    @classmethod
    def log(cls, alpha: float, eta: float = LOG_ETA) -> LossFunction:
        return cls("log", alpha=float(alpha), eta=float(eta))

    @classmethod
    def tabulated(cls, knots: Sequence[tuple[float, float]]) -> LossFunction:
        return cls("tabulated", knots=tuple((float(x), float(y)) for x, y in knots))

    @property
    def x_max(self) -> float:
        return 1.0 - self.eta if self.kind == "log" else 1.0

    @property
    def cap(self) -> float:
        """G(1), or G(1 - eta) for the log kind."""
        return float(self(self.x_max))

    @property
    def lipschitz(self) -> float | None:
        """Lipschitz constant on [0, 1]; None for the log kind."""
        if self.kind == "linear":
            return self.alpha
        if self.kind == "tabulated":
            return self._max_slope()
        return None

    def _max_slope(self) -> float:
        xs, ys = np.array(self.knots).T
        return float(np.max(np.diff(ys) / np.diff(xs)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return self.alpha * x
        if self.kind == "log":
            return -self.alpha * np.log1p(-np.minimum(x, self.x_max))
        xs, ys = np.array(self.knots).T
        return np.interp(x, xs, ys)


def eval_loss(G: LossFunction, x):
    """Evaluate G with domain checks. Raises DomainError outside [0, 1] (or above 1 - eta for log)."""
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > G.x_max):
        raise DomainError(f"loss argument outside [0, {G.x_max}]: {x}")
    out = G(arr)
    return float(out) if out.ndim == 0 else out


def modulus(G: LossFunction, delta: float) -> float:
    """Modulus of continuity bound: |G(z) - G(z')| <= modulus(G, |z - z'|)."""
    if not 0 <= delta <= 1:
        raise DomainError(f"modulus argument outside [0, 1]: {delta}")
    if delta == 0:
        return 0.0
    if G.kind == "linear":
        return G.alpha * delta
    if G.kind == "tabulated":
        return G._max_slope() * delta
    # convex increasing: largest increment sits at the right end of the domain
    hi = G.x_max
    return float(G(hi) - G(max(hi - delta, 0.0)))


# ---------------------------------------------------------------------------
# time grid and loss curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Grid 0 = t_0 < t_1 < ... on [0, horizon].

    With ``growth == 0`` the points are t_k = k * step (last point clipped to the
    horizon). With ``growth > 0`` the increment is max(step, growth * t_k), which
    keeps the step count logarithmic in the horizon for long runs.
    """

    horizon: float
    step: float
    growth: float = 0.0

    def __post_init__(self):
        if not (self.step > 0 and self.horizon >= self.step):
            raise ConfigError(f"need step > 0 and horizon >= step (got step={self.step}, horizon={self.horizon})")
        if self.growth < 0:
            raise ConfigError("grid growth must be nonnegative")

    @property
    def times(self) -> np.ndarray:
        return _grid_times(self.horizon, self.step, self.growth)

    @property
    def count(self) -> int:
        """Number of steps (grid points minus one)."""
        return len(self.times) - 1


_TIMES_CACHE: dict = {}


def _grid_times(horizon: float, step: float, growth: float) -> np.ndarray:
    key = (horizon, step, growth)
    if key not in _TIMES_CACHE:
        if growth == 0:
            n = math.ceil(horizon / step - 1e-9)
            t = np.arange(n + 1, dtype=float) * step
        else:
            pts = [0.0]
            while pts[-1] < horizon - 1e-12:
                pts.append(pts[-1] + max(step, growth * pts[-1]))
            t = np.array(pts)
        t[-1] = horizon
        t.setflags(write=False)
        _TIMES_CACHE[key] = t
    return _TIMES_CACHE[key]


@dataclass(frozen=True, eq=False)
class LossCurve:
    """Nondecreasing right-continuous step function on ``times`` with values in [0, 1].

    ``terminal`` is the value at infinity (>= last grid value). ``stderr`` optionally
    carries the Monte Carlo standard error per grid point.
    """

    times: np.ndarray
    values: np.ndarray
    terminal: float | None = None
    stderr: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) == 0:
            raise ConfigError("loss curve needs matching 1-d times and values")
        if t[0] < 0 or np.any(np.diff(t) <= 0):
            raise ConfigError("loss curve times must start at t >= 0 and increase strictly")
        if np.any(np.diff(v) < 0):
            i = int(np.flatnonzero(np.diff(v) < 0)[0])
            raise ConfigError(f"loss curve decreases between t={t[i]} and t={t[i + 1]}")
        if v[0] < 0 or v[-1] > 1:
            raise ConfigError("loss curve values must lie in [0, 1]")
        term = float(v[-1]) if self.terminal is None else float(self.terminal)
        if term < v[-1] or term > 1:
            raise ConfigError("terminal value must lie in [last value, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "terminal", term)
        if self.stderr is not None:
            object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))

    @classmethod
    def zero(cls, grid: TimeGrid) -> LossCurve:
        t = grid.times
        return cls(t, np.zeros_like(t))

    @classmethod
    def from_grid(cls, grid: TimeGrid, values, terminal=None, stderr=None) -> LossCurve:
        return cls(grid.times, values, terminal, stderr)

    def __call__(self, t):
        """Evaluate at arbitrary times; 0 before the first grid point and before time 0."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], 0.0)
        return out

    def stopped(self, t: float) -> LossCurve:
        """The curve stopped at time t: s -> curve(min(s, t))."""
        keep = self.times <= t
        times = self.times[keep]
        values = self.values[keep]
        if len(times) == 0:
            return LossCurve(np.array([0.0]), np.array([0.0]), 0.0)
        return LossCurve(times, values, float(values[-1]))


def levy_distance(a: LossCurve, b: LossCurve, tol: float = LEVY_TOL, max_iter: int = LEVY_MAX_ITER) -> float:
    """Levy distance inf{eps: a(t+eps)+eps >= b(t) >= a(t-eps)-eps for all t >= 0}.

    Both sides of each inequality are right-continuous step functions of t, so the
    check is exact at the merged breakpoints; eps is found by bisection on [0, 1].
    """
    ta, va = _compress(a)
    tb, vb = _compress(b)
    ends = abs(a.terminal - b.terminal)

    def ok(eps: float) -> bool:
        if eps < ends:
            return False
        # b(t) <= a(t + eps) + eps  and  a(t) <= b(t + eps) + eps
        for (tx, vx, ty, vy) in ((ta, va, tb, vb), (tb, vb, ta, va)):
            pts = np.concatenate(([0.0], ty, tx - eps))
            pts = pts[pts >= 0]
            lhs = _step_eval(tx, vx, pts + eps) + eps
            rhs = _step_eval(ty, vy, pts)
            if np.any(lhs < rhs - 1e-15):
                return False
        return True

    if ok(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _compress(c: LossCurve):
    """Breakpoints of the step function: the first grid point and every change of value."""
    keep = np.ones(len(c.times), dtype=bool)
    keep[1:] = c.values[1:] != c.values[:-1]
    return c.times[keep], c.values[keep]


def _step_eval(times, values, t):
    idx = np.searchsorted(times, t, side="right") - 1
    return np.where(idx >= 0, values[np.clip(idx, 0, None)], 0.0)


def weighted_levy_distance(a: LossCurve, b: LossCurve) -> float:
    """Integral of exp(-t) * min(d(a stopped at t, b stopped at t), 1) over t >= 0.

    Trapezoid rule on the merged grid; the tail beyond the last grid time T is
    the value at T times exp(-T). Stopped curves only change at jump times, so
    the distance is computed once per distinct pair.
    """
    ts = np.union1d(a.times, b.times)
    ja, jb = _jumps(a), _jumps(b)
    ka = np.searchsorted(ja, ts, side="right")
    kb = np.searchsorted(jb, ts, side="right")
    cache: dict = {}
    d = np.empty(len(ts))
    for i, t in enumerate(ts):
        key = (ka[i], kb[i])
        if key not in cache:
            cache[key] = min(levy_distance(a.stopped(t), b.stopped(t)), 1.0)
        d[i] = cache[key]
    f = np.exp(-ts) * d
    body = float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(ts)))
    head = d[0] * (1.0 - math.exp(-ts[0]))
    return min(1.0, head + body + d[-1] * math.exp(-ts[-1]))


def _jumps(c: LossCurve) -> np.ndarray:
    """Times at which the step function changes value (including a jump from 0 at the first point)."""
    prev = np.concatenate(([0.0], c.values[:-1]))
    return c.times[c.values != prev]


# ---------------------------------------------------------------------------
# initial distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialDistribution:
    """Law of the initial capital, translated by ``shift``; support must be in (0, inf)."""

    kind: str
    z0: float = 1.0
    a: float = 0.0
    b: float = 0.0
    quantiles: tuple[tuple[float, float], ...] = ()
    shift: float = 0.0

    def __post_init__(self):
        if self.shift < 0:
            raise ConfigError("initial shift must be nonnegative")
        if self.kind == "dirac":
            if not self.z0 > 0:
                raise ConfigError(f"dirac initial level must be positive, got {self.z0}")
        elif self.kind == "uniform":
            if not 0 < self.a < self.b:
                raise ConfigError(f"uniform initial law needs 0 < a < b, got a={self.a}, b={self.b}")
        elif self.kind == "tabulated":
            us = [q[0] for q in self.quantiles]
            qs = [q[1] for q in self.quantiles]
            if len(us) < 2 or us[0] != 0.0 or us[-1] != 1.0 or any(v <= u for u, v in zip(us, us[1:])):
                raise ConfigError("quantile table must have increasing levels from 0 to 1")
            if any(y < x for x, y in zip(qs, qs[1:])):
                raise ConfigError("quantile table values must be nondecreasing")
            if not qs[0] > 0:
                raise ConfigError("quantile table support touches 0")
        else:
            raise ConfigError(f"unknown initial law kind {self.kind!r}")

    @classmethod
    def dirac(cls, z0: float, shift: float = 0.0) -> InitialDistribution:
        return cls("dirac", z0=float(z0), shift=float(shift))

    @classmethod
    def uniform(cls, a: float, b: float, shift: float = 0.0) -> InitialDistribution:
        return cls("uniform", a=float(a), b=float(b), shift=float(shift))

    @classmethod
    def tabulated(cls, quantiles: Sequence[tuple[float, float]], shift: float = 0.0) -> InitialDistribution:
        return cls("tabulated", quantiles=tuple((float(u), float(q)) for u, q in quantiles), shift=float(shift))

    def with_shift(self, shift: float) -> InitialDistribution:
        return InitialDistribution(self.kind, self.z0, self.a, self.b, self.quantiles, float(shift))

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "dirac":
            lo = hi = self.z0
        elif self.kind == "uniform":
            lo, hi = self.a, self.b
        else:
            lo, hi = self.quantiles[0][1], self.quantiles[-1][1]
        return lo + self.shift, hi + self.shift

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "dirac":
            q = np.full_like(u, self.z0)
        elif self.kind == "uniform":
            q = self.a + (self.b - self.a) * u
        else:
            us, qs = np.array(self.quantiles).T
            q = np.interp(u, us, qs)
        return q + self.shift


def sample_initial(theta: InitialDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """n i.i.d. draws from theta (shift included). Dirac laws consume no randomness."""
    if n < 1:
        raise ConfigError("sample size must be at least 1")
    if theta.kind == "dirac":
        return np.full(n, theta.z0 + theta.shift)
    return theta.quantile(rng.random(n))


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RngConfig:
    """Master seed; every consumer derives an independent stream from a spawn key.

    A stream is addressed by (purpose, unit index), where the unit is a batch of
    replications or a chunk of Monte Carlo paths. Units never depend on the
    worker count, so results do not either.
    """

    master_seed: int = 0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master seed must be an unsigned 64-bit integer")

    def stream(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.PCG64(ss))
