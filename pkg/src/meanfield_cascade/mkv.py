"""Solvers for the mean-field limit of the cascade model.

The limit loss is a fixed point of Gamma[l]_t = P(tau <= t), where tau is the first
time Z + beta*t + sigma*B_t falls to the barrier G(l_t). Both Gamma and its
regularized variant are estimated by Monte Carlo over paths that are regenerated
from the same streams on every call, so each operator is monotone in its
argument sample by sample and Picard iterates increase exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analytics import EconomyParams
from .core import STREAM_MKV, ConfigError, InitialDistribution, LossCurve, LossFunction, RngConfig, TimeGrid
from .parallel import run_tasks

CHUNK_ELEMENTS = 1 << 21
DEFAULT_TOL = 5e-3
DEFAULT_MAX_ITERS = 50


@dataclass(frozen=True)
class MkvModel:
    economy: EconomyParams
    G: LossFunction
    theta: InitialDistribution
    grid: TimeGrid
    volatility: float = 1.0

    def __post_init__(self):
        if self.volatility < 0:
            raise ConfigError("volatility must be nonnegative")


@dataclass
class PicardReport:
    iterates: list
    sup_deltas: list
    converged: bool
    mc_paths: int
    mc_stderr_max: float
    terminal_interval: tuple = (0.0, 1.0)
    max_jump: tuple = (0.0, 0.0)


@dataclass(frozen=True)
class RegularizedConfig:
    eps: float
    mc_paths: int = 20000

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.mc_paths < 2:
            raise ConfigError("mc_paths must be at least 2")


@dataclass
class SweepReport:
    eps: list
    curves: list
    monotone: bool
    violations: list
    gaps: list | None = None
    iterations: int = 0
    converged: bool = False
    reports: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# path generation
# ---------------------------------------------------------------------------


def _chunks(model: MkvModel, n_paths: int):
    K = model.grid.count
    size = max(1, CHUNK_ELEMENTS // (K + 1))
    return [(i, min(size, n_paths - s)) for i, s in enumerate(range(0, n_paths, size))]


def _paths(model: MkvModel, rng: RngConfig, chunk: int, size: int):
    """Free paths Z + beta*t + sigma*W on the grid, plus one uniform per step for bridge tests."""
    g = rng.stream(STREAM_MKV, chunk)
    t = model.grid.times
    dt = np.diff(t)
    th = model.theta
    if th.kind == "dirac":
        z = np.full(size, th.z0 + th.shift)
    else:
        z = th.quantile(g.random(size))
    inc = g.standard_normal((size, len(dt))) * (model.volatility * np.sqrt(dt))
    u = g.random((size, len(dt)))
    y = np.empty((size, len(t)))
    y[:, 0] = 0.0
    np.cumsum(inc, axis=1, out=y[:, 1:])
    y += z[:, None] + model.economy.beta * t[None, :]
    return y, u


def _first_hits(y, u, barrier, dt, sig2):
    """Index of the first grid time by which each path has reached the barrier (K+1 if never).

    A path counts at t_k if it sits at or below b_k there, and at t_{k+1} if it
    crosses b_k inside (t_k, t_{k+1}] (endpoint or bridge test).
    """
    d = y - barrier[None, :]
    below = d <= 0
    ev = below.copy()
    d0 = d[:, :-1]
    d1 = y[:, 1:] - barrier[None, :-1]
    cross = d1 <= 0
    if sig2 > 0:
        with np.errstate(over="ignore", invalid="ignore"):
            cross |= u < np.exp(-2.0 * np.maximum(d0, 0.0) * np.maximum(d1, 0.0) / (sig2 * dt[None, :]))
    ev[:, 1:] |= cross
    idx = np.where(ev.any(axis=1), ev.argmax(axis=1), y.shape[1])
    return idx, y[:, -1] - barrier[-1]


def _gamma_chunk(model, rng, chunk, size, barriers):
    y, u = _paths(model, rng, chunk, size)
    dt = np.diff(model.grid.times)
    sig2 = model.volatility ** 2
    K1 = y.shape[1]
    out = []
    for b in barriers:
        idx, dist = _first_hits(y, u, b, dt, sig2)
        counts = np.bincount(idx, minlength=K1 + 1)[:K1]
        alive = idx == K1
        out.append((counts, _tail_sums(model, dist[alive], b[-1])))
    return out


def _tail_sums(model, dist, b_T):
    """Sums over unhit paths of the lower and upper probabilities of never being hit."""
    beta = model.economy.beta
    sig2 = model.volatility ** 2
    if beta <= 0 or len(dist) == 0:
        return 0.0, 0.0
    cap = model.G.cap
    k = 2.0 * beta / sig2 if sig2 > 0 else np.inf
    with np.errstate(invalid="ignore"):
        lo = -np.expm1(-k * np.maximum(dist - (cap - b_T), 0.0))
        hi = -np.expm1(-k * np.maximum(dist, 0.0))
    return float(np.sum(lo)), float(np.sum(hi))


def _gamma_many(curves, model: MkvModel, mc_paths: int, rng: RngConfig, workers=1):
    barriers = [_barrier(c, model) for c in curves]
    tasks = [(model, rng, i, n, barriers) for i, n in _chunks(model, mc_paths)]
    parts = run_tasks(_gamma_chunk, tasks, workers)
    res = []
    for j in range(len(curves)):
        counts = np.sum([p[j][0] for p in parts], axis=0)
        lo = sum(p[j][1][0] for p in parts)
        hi = sum(p[j][1][1] for p in parts)
        cdf = np.cumsum(counts) / mc_paths
        se = np.sqrt(cdf * (1 - cdf) / mc_paths)
        # never-hit fraction times survive-forever bounds gives the terminal interval
        term = (1.0 - hi / mc_paths, 1.0 - lo / mc_paths)
        res.append((cdf, se, term))
    return res


def _barrier(curve: LossCurve, model: MkvModel) -> np.ndarray:
    t = model.grid.times
    if len(curve.times) != len(t) or not np.allclose(curve.times, t):
        raise ConfigError("loss curve must live on the model grid")
    return np.asarray(model.G(curve.values), dtype=float)


def _curve(model, cdf, se, term) -> LossCurve:
    cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
    terminal = min(1.0, max(float(cdf[-1]), 0.5 * (term[0] + term[1])))
    return LossCurve(model.grid.times, cdf, terminal, se)


def gamma_operator(curve: LossCurve, model: MkvModel, mc_paths: int, rng: RngConfig, workers=1) -> LossCurve:
    """Monte Carlo first-passage CDF of the free path below the moving barrier G(curve)."""
    cdf, se, term = _gamma_many([curve], model, mc_paths, rng, workers)[0]
    return _curve(model, cdf, se, term)


def minimal_solution_picard(model: MkvModel, max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL,
                            mc_paths: int = 100000, rng: RngConfig | None = None, workers=1):
    """Iterate Gamma from the zero curve with common random numbers.

    With ``tol = 0`` the iteration runs to the exact fixed point of the sampled
    operator (values live on the lattice k / mc_paths, so it terminates).
    """
    if max_iters < 1:
        raise ConfigError("max_iters must be at least 1")
    rng = rng or RngConfig()
    cur = LossCurve.zero(model.grid)
    iterates, deltas = [], []
    converged = False
    term = (0.0, 1.0)
    for _ in range(max_iters):
        cdf, se, term = _gamma_many([cur], model, mc_paths, rng, workers)[0]
        nxt = _curve(model, cdf, se, term)
        delta = float(np.max(np.abs(nxt.values - cur.values)))
        iterates.append(nxt)
        deltas.append(delta)
        cur = nxt
        if delta <= tol:
            converged = True
            break
    inc = np.diff(cur.values)
    j = int(np.argmax(inc)) if len(inc) else 0
    report = PicardReport(
        iterates=iterates,
        sup_deltas=deltas,
        converged=converged,
        mc_paths=mc_paths,
        mc_stderr_max=float(np.max(cur.stderr)),
        terminal_interval=(max(term[0], float(cur.values[-1])), term[1]),
        max_jump=(float(model.grid.times[j + 1]) if len(inc) else 0.0, float(inc[j]) if len(inc) else 0.0),
    )
    return cur, report


# ---------------------------------------------------------------------------
# regularized operator
# ---------------------------------------------------------------------------


def _reg_chunk(model, rng, chunk, size, barriers, eps_list):
    y, _ = _paths(model, rng, chunk, size)
    dt = np.diff(model.grid.times)
    out = []
    for b, eps in zip(barriers, eps_list):
        neg = np.maximum(b[None, :] - y, 0.0)
        acc = np.zeros_like(y)
        np.cumsum(0.5 * (neg[:, 1:] + neg[:, :-1]) * dt[None, :], axis=1, out=acc[:, 1:])
        m = -np.expm1(-acc / eps)
        out.append((m.sum(axis=0), (m * m).sum(axis=0)))
    return out


def _reg_many(curves, eps_list, model, mc_paths, rng, workers=1):
    barriers = [_barrier(c, model) for c in curves]
    tasks = [(model, rng, i, n, barriers, eps_list) for i, n in _chunks(model, mc_paths)]
    parts = run_tasks(_reg_chunk, tasks, workers)
    res = []
    for j in range(len(curves)):
        s = np.sum([p[j][0] for p in parts], axis=0)
        s2 = np.sum([p[j][1] for p in parts], axis=0)
        mean = s / mc_paths
        var = np.maximum(s2 / mc_paths - mean * mean, 0.0) * mc_paths / (mc_paths - 1)
        res.append(LossCurve(model.grid.times, np.maximum.accumulate(np.clip(mean, 0, 1)), None,
                             np.sqrt(var / mc_paths)))
    return res


def regularized_step(curve: LossCurve, cfg: RegularizedConfig, model: MkvModel, rng: RngConfig, workers=1) -> LossCurve:
    """1 - E exp(-(1/eps) * int_0^t (Y_s - G(curve_s))^- ds), trapezoid rule on the grid.

    Y is the free path Z + beta*s + sigma*W_s. The result is a loss fraction; the
    contagion map is applied when it is next used as a barrier.
    """
    return _reg_many([curve], [cfg.eps], model, cfg.mc_paths, rng, workers)[0]


def _check_lipschitz(model: MkvModel):
    if model.G.kind == "log":
        raise ConfigError("regularized solver needs a Lipschitz loss function (linear or tabulated)")


def regularized_solve(cfg: RegularizedConfig, model: MkvModel, max_iters: int = DEFAULT_MAX_ITERS,
                      tol: float = DEFAULT_TOL, rng: RngConfig | None = None, workers=1):
    """Picard iteration of the regularized step from zero; returns (curve, report)."""
    sweep = epsilon_sweep([cfg.eps], model, cfg.mc_paths, rng, max_iters, tol, workers=workers)
    return sweep.curves[0], sweep.reports[0]


def epsilon_sweep(eps_list, model: MkvModel, mc_paths: int = 20000, rng: RngConfig | None = None,
                  max_iters: int = DEFAULT_MAX_ITERS, tol: float = DEFAULT_TOL, reference: LossCurve | None = None,
                  workers=1) -> SweepReport:
    """Solve the regularized equation for each eps on shared paths.

    All eps are iterated in lockstep until every one has converged, so the n-th
    iterates are ordered in eps and the final curves are too. ``reference`` (for
    instance the Picard minimal solution on the same paths) is used to report gaps.
    """
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(e <= 0 for e in eps_list):
        raise ConfigError("eps values must be positive")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigError("eps values must be strictly decreasing")
    _check_lipschitz(model)
    if max_iters < 1:
        raise ConfigError("max_iters must be at least 1")
    rng = rng or RngConfig()
    cur = [LossCurve.zero(model.grid) for _ in eps_list]
    hist = [[] for _ in eps_list]
    deltas = [[] for _ in eps_list]
    done = False
    it = 0
    for it in range(1, max_iters + 1):
        nxt = _reg_many(cur, eps_list, model, mc_paths, rng, workers)
        for j, c in enumerate(nxt):
            deltas[j].append(float(np.max(np.abs(c.values - cur[j].values))))
            hist[j].append(c)
        cur = nxt
        if all(d[-1] <= tol for d in deltas):
            done = True
            break
    violations = []
    for a, b in zip(cur, cur[1:]):
        violations.append(float(np.max(a.values - b.values)))
    gaps = None
    if reference is not None:
        gaps = [float(np.max(np.abs(reference.values - c.values))) for c in cur]
    reports = [PicardReport(hist[j], deltas[j], done, mc_paths, float(np.max(cur[j].stderr)))
               for j in range(len(eps_list))]
    return SweepReport(eps_list, cur, all(v <= 0 for v in violations), violations, gaps, it, done, reports)
