"""N-bank particle system with default cascades.

Each bank follows X^i_t = Z^i + beta*t + B^i_t + (allocated drift) - G(L_t), where
L_t is the defaulted fraction. Time is stepped on a grid; defaults inside a
step are detected with a Brownian-bridge correction and every step ends with
the minimal cascade fixed point.

Replications run in batches: a batch is a (B, N) block that owns one random
stream. Each step consumes a full (B, N) block of normals followed by a full
(B, N) block of uniforms, so particle i in replication r always sees the same
draws whatever the strategy, the loss function or the set of survivors.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .analytics import EconomyParams
from .control.strategies import ControlStrategy, allocate, evaluate_strategy, future_bounds
from .core import (
    STREAM_PARTICLE,
    ConfigError,
    InitialDistribution,
    LossFunction,
    RngConfig,
    TimeGrid,
    sample_initial,
)
from .parallel import run_tasks

RESOLVE_CHECK_EVERY = 16
BATCH_ELEMENTS = 65536


@dataclass
class ParticleSystemState:
    """Capital levels of N banks. Dead banks keep the level they had when resolved."""

    levels: np.ndarray
    alive: np.ndarray
    default_times: np.ndarray
    time: float = 0.0
    flags: np.ndarray | None = None

    @classmethod
    def initial(cls, theta: InitialDistribution, N: int, rng) -> ParticleSystemState:
        return cls(sample_initial(theta, N, rng), np.ones(N, dtype=bool), np.full(N, np.nan))

    @property
    def N(self) -> int:
        return len(self.levels)

    @property
    def loss_fraction(self) -> float:
        return (self.N - int(self.alive.sum())) / self.N

    @property
    def survivors(self) -> int:
        return int(self.alive.sum())


@dataclass(frozen=True)
class SurvivalEstimate:
    lower: float
    upper: float
    midpoint: float
    count_basis: str = "expected"


@dataclass(frozen=True)
class SimConfig:
    N: int
    economy: EconomyParams
    G: LossFunction
    theta: InitialDistribution
    grid: TimeGrid
    rng: RngConfig = field(default_factory=RngConfig)
    strategy: ControlStrategy = field(default_factory=ControlStrategy)
    replications: int = 1
    batch_size: int | None = None
    bridge: bool = True
    keep_paths: bool = False
    stop_when_resolved: bool = False

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N must be at least 1")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")

    @property
    def batch(self) -> int:
        b = self.batch_size or max(1, BATCH_ELEMENTS // self.N)
        return min(b, self.replications)


@dataclass
class RunResult:
    """Per-replication survivor statistics and the averaged loss curve.

    ``lower``/``upper``/``midpoint`` are the survivors-at-infinity estimates of each
    replication; ``survivors_T`` the realized count at the last simulated time
    (the horizon, or ``stopped_at`` when the run stopped once resolved).
    """

    N: int
    times: np.ndarray
    survivors_T: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    midpoint: np.ndarray
    loss_mean: np.ndarray
    loss_stderr: np.ndarray
    loss_paths: np.ndarray | None
    stopped_at: np.ndarray
    seeds: dict
    timings: dict

    @property
    def replications(self) -> int:
        return len(self.midpoint)

    def mean(self, which: str = "midpoint") -> float:
        return float(np.mean(getattr(self, which)))

    def stderr(self, which: str = "midpoint") -> float:
        x = getattr(self, which)
        return float(np.std(x, ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0

    def estimate(self) -> SurvivalEstimate:
        return SurvivalEstimate(self.mean("lower"), self.mean("upper"), self.mean("midpoint"))


# ---------------------------------------------------------------------------
# cascade
# ---------------------------------------------------------------------------


def cascade_fixpoint(levels, alive, prior_loss: float, new_hits, G: LossFunction):
    """Smallest default set closed under contagion.

    Starting from the dead banks plus ``new_hits``, repeatedly add every alive bank
    whose level minus G(|D|/N) - G(prior_loss) is <= 0. Returns the default mask,
    the new loss fraction, and the levels after subtracting the realized contagion
    from the surviving banks.
    """
    levels = np.asarray(levels, dtype=float)
    alive = np.asarray(alive, dtype=bool)
    N = len(levels)
    dead = ~alive.copy()
    dead[np.asarray(new_hits, dtype=int)] = True
    g0 = float(G(prior_loss))
    for _ in range(N + 1):
        shock = float(G(dead.sum() / N)) - g0
        nxt = dead | (levels - shock <= 0)
        if nxt.sum() == dead.sum():
            break
        dead = nxt
    new_loss = dead.sum() / N
    out = levels.copy()
    out[~dead] -= float(G(new_loss)) - g0
    return dead, new_loss, out


def _cascade_batch(x, alive, hit, dead_count, N, G):
    """Resolve cascades in place for every row of a batch.

    Candidates are alive, unhit banks that could default at all; sorted by level,
    the j-th smallest defaults iff every earlier one did and it lies below the
    contagion G((D + h + j)/N) - G(D/N). Returns the new dead count per row.
    """
    h = hit.sum(axis=1)
    rows = np.flatnonzero(h)
    alive &= ~hit
    if len(rows) == 0:
        return dead_count
    D = dead_count[rows]
    g0 = G(D / N)
    reach = G(min((N - 1) / N, G.x_max)) - g0
    xs = x[rows]
    cand = alive[rows] & (xs <= reach[:, None])
    extra = np.zeros(len(rows), dtype=np.int64)
    if cand.any():
        r, c = np.nonzero(cand)
        v = xs[r, c]
        order = np.lexsort((v, r))
        r, c, v = r[order], c[order], v[order]
        start = np.searchsorted(r, np.arange(len(rows)))
        j = np.arange(len(r)) - start[r]
        thr = G(np.minimum((D[r] + h[rows][r] + j) / N, 1.0)) - g0[r]
        bad = v > thr
        # defaults are the sorted prefix before the first bad entry of each row
        seg_bad = np.cumsum(bad)
        before = np.concatenate(([0], seg_bad))[start[r]]
        ok = (seg_bad - before) == 0
        alive[rows[r[ok]], c[ok]] = False
        extra = np.bincount(r[ok], minlength=len(rows))
    new_dead = D + h[rows] + extra
    shock = G(new_dead / N) - g0
    x[rows] -= shock[:, None]
    out = dead_count.copy()
    out[rows] = new_dead
    return out


# ---------------------------------------------------------------------------
# single replication
# ---------------------------------------------------------------------------


def step(state: ParticleSystemState, dt: float, economy: EconomyParams, G: LossFunction,
         strategy: ControlStrategy, rng: np.random.Generator, bridge: bool = True) -> ParticleSystemState:
    """Advance one replication by dt: allocate, diffuse, detect hits, resolve the cascade."""
    N = state.N
    a = evaluate_strategy(strategy, state)
    xi = rng.standard_normal(N)
    u = rng.random(N)
    old = state.levels
    new = old.copy()
    al = state.alive
    new[al] = old[al] + (economy.beta + a[al]) * dt + math.sqrt(dt) * xi[al]
    hit = al & (new <= 0)
    if bridge:
        pos = al & ~hit
        hit |= pos & (u < np.exp(-2.0 * old * np.where(pos, new, 0.0) / dt))
    t1 = state.time + dt
    deftimes = state.default_times.copy()
    alive = al.copy()
    if hit.any():
        dead, _, new = cascade_fixpoint(new, al, state.loss_fraction, np.flatnonzero(hit), G)
        newly = dead & al
        deftimes[newly] = t1
        alive = ~dead
    flags = None if state.flags is None else state.flags.copy()
    return ParticleSystemState(new, alive, deftimes, t1, flags)


def _p_surv(z, drift):
    z = np.maximum(z, 0.0)
    return np.where(drift > 0, -np.expm1(-2.0 * np.maximum(drift, 0.0) * z), 0.0)


def _tail_bounds(x, alive, dead_count, N, beta, G, lo_a, hi_a):
    """Row sums of the lower and upper survival-at-infinity probabilities."""
    rem = G(min((N - 1) / N, G.x_max)) - G(dead_count / N)
    rem = np.maximum(rem, 0.0)
    lo = np.where(alive, _p_surv(x - rem[:, None], beta + lo_a), 0.0).sum(axis=1)
    hi = np.where(alive, _p_surv(x, beta + hi_a), 0.0).sum(axis=1)
    return lo, hi


def estimate_survivors_at_infinity(state: ParticleSystemState, economy: EconomyParams, G: LossFunction,
                                   strategy: ControlStrategy | None = None) -> SurvivalEstimate:
    """Sandwich for the expected number of banks that never default, given the state.

    Each alive bank at level x survives forever with probability at least
    p(x - c, beta + a_min) and at most p(x, beta + a_max), where c is the contagion
    still possible (all but one remaining bank defaulting), a_min/a_max bound the
    allocation it can receive from now on, and p(z, b) = 1 - exp(-2 b z^+) for b > 0
    and 0 otherwise.
    """
    strategy = strategy or ControlStrategy.zero()
    N = state.N
    alive = state.alive[None, :]
    kw = {}
    if strategy.kind == "threshold":
        flags = state.flags if state.flags is not None else np.zeros(N, dtype=bool)
        kw = dict(flags=flags[None, :], nflag=np.array([int(flags.sum())]), params=strategy.threshold_params(N))
    lo_a, hi_a = future_bounds(strategy, alive, **kw)
    dc = np.array([N - state.survivors])
    lo, hi = _tail_bounds(state.levels[None, :], alive, dc, N, economy.beta, G, lo_a, hi_a)
    return SurvivalEstimate(float(lo[0]), float(hi[0]), 0.5 * float(lo[0] + hi[0]))


def dkw_band(n: int, gamma: float) -> float:
    """Probability bound 2 exp(-2 n gamma^2) on a sup-distance gamma between empirical and true CDF."""
    if n < 1 or not gamma > 0:
        raise ConfigError("dkw band needs n >= 1 and gamma > 0")
    return min(1.0, 2.0 * math.exp(-2.0 * n * gamma * gamma))


# ---------------------------------------------------------------------------
# batched simulation
# ---------------------------------------------------------------------------


def _run_batch(cfg: SimConfig, index: int, size: int) -> dict:
    N = cfg.N
    G = cfg.G
    beta = cfg.economy.beta
    strat = cfg.strategy
    rng = cfg.rng.stream(STREAM_PARTICLE, index)
    times = cfg.grid.times
    K = len(times) - 1
    if cfg.theta.kind == "dirac":
        x = np.full((size, N), cfg.theta.z0 + cfg.theta.shift)
    else:
        x = cfg.theta.quantile(rng.random((size, N)))
    alive = np.ones((size, N), dtype=bool)
    cols = np.arange(N)
    dead_count = np.zeros(size, dtype=np.int64)
    params = strat.threshold_params(N) if strat.kind == "threshold" else None
    flags = np.zeros((size, N), dtype=bool)
    nflag = np.zeros(size, dtype=np.int64)
    compact = strat.kind != "custom"

    loss_sum = np.zeros(K + 1)
    loss_sq = np.zeros(K + 1)
    paths = np.zeros((size, K + 1)) if cfg.keep_paths else None
    stopped = K
    for k in range(K):
        dt = times[k + 1] - times[k]
        sq = math.sqrt(dt)
        if strat.kind == "zero":
            a = 0.0
        else:
            a = allocate(strat, x, alive, flags, nflag, params, times[k])
        xi = rng.standard_normal((size, N))
        u = rng.random((size, N))
        if len(cols) < N:
            xi = xi[:, cols]
            u = u[:, cols]
        new = x + (beta + a) * dt + sq * xi
        hit = alive & (new <= 0)
        if cfg.bridge:
            with np.errstate(over="ignore", invalid="ignore"):
                cross = u < np.exp(-2.0 * np.maximum(x, 0.0) * np.maximum(new, 0.0) / dt)
            hit |= alive & cross
        x = np.where(alive, new, x)
        if hit.any():
            dead_count = _cascade_batch(x, alive, hit, dead_count, N, G)
        frac = dead_count / N
        loss_sum[k + 1] = frac.sum()
        loss_sq[k + 1] = (frac * frac).sum()
        if paths is not None:
            paths[:, k + 1] = frac
        if compact and len(cols) > 64:
            live = alive.any(axis=0)
            if live.sum() * 2 < len(cols):
                x, alive, flags, cols = x[:, live], alive[:, live], flags[:, live], cols[live]
        if not alive.any():
            stopped = k + 1
            break
        if cfg.stop_when_resolved and (k + 1) % RESOLVE_CHECK_EVERY == 0:
            if _resolved(strat, x, alive, flags, nflag, params, dead_count, N, beta, G):
                stopped = k + 1
                break
    if stopped < K:
        frac = dead_count / N
        loss_sum[stopped + 1:] = frac.sum()
        loss_sq[stopped + 1:] = (frac * frac).sum()
        if paths is not None:
            paths[:, stopped + 1:] = frac[:, None]

    lo_a, hi_a = future_bounds(strat, alive, flags, nflag, params)
    lo, hi = _tail_bounds(x, alive, dead_count, N, beta, G, lo_a, hi_a)
    return dict(
        survivors=N - dead_count,
        lower=lo,
        upper=hi,
        loss_sum=loss_sum,
        loss_sq=loss_sq,
        paths=paths,
        stopped=np.full(size, times[stopped]),
    )


def _resolved(strat, x, alive, flags, nflag, params, dead_count, N, beta, G) -> bool:
    """True when every row is settled: no survivors, or an exact tail estimate with positive drift."""
    if not alive.any():
        return True
    lo_a, hi_a = future_bounds(strat, alive, flags, nflag, params)
    rem = G(min((N - 1) / N, G.x_max)) - G(dead_count / N)
    fixed = (rem <= 0)[:, None] & (lo_a == hi_a) & (beta + lo_a > 0)
    return bool(np.all(fixed | ~alive))


def simulate(config: SimConfig, workers: int = 1) -> RunResult:
    """Run all replications; results do not depend on ``workers``."""
    t0 = _time.perf_counter()
    B = config.batch
    sizes = [min(B, config.replications - s) for s in range(0, config.replications, B)]
    tasks = [(config, i, n) for i, n in enumerate(sizes)]
    outs = run_tasks(_run_batch, tasks, workers)
    R = config.replications
    times = config.grid.times
    lower = np.concatenate([o["lower"] for o in outs])
    upper = np.concatenate([o["upper"] for o in outs])
    s = np.sum([o["loss_sum"] for o in outs], axis=0)
    s2 = np.sum([o["loss_sq"] for o in outs], axis=0)
    mean = s / R
    var = np.maximum(s2 / R - mean * mean, 0.0) * (R / max(R - 1, 1))
    return RunResult(
        N=config.N,
        times=times,
        survivors_T=np.concatenate([o["survivors"] for o in outs]),
        lower=lower,
        upper=upper,
        midpoint=0.5 * (lower + upper),
        loss_mean=mean,
        loss_stderr=np.sqrt(var / R),
        loss_paths=np.concatenate([o["paths"] for o in outs]) if config.keep_paths else None,
        stopped_at=np.concatenate([o["stopped"] for o in outs]),
        seeds={"master_seed": int(config.rng.master_seed), "stream": STREAM_PARTICLE, "batches": len(sizes),
               "batch_size": B},
        timings={"wall_s": _time.perf_counter() - t0, "workers": workers},
    )
