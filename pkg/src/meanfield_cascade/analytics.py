"""Closed-form laws for drifted Brownian motion and the budget-control scaling constants.

Normal tail and quantile come from scipy.special; ``ntail(x) = P(B_1 > x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .core import DomainError, InitialDistribution

H_CLAMP = -1e6
UR_UPPER = 4.0 / math.sqrt(math.pi)


def ntail(x):
    """Standard normal tail P(B_1 > x)."""
    return special.ndtr(-np.asarray(x, dtype=float))


def ntail_inv(p):
    """Inverse of :func:`ntail`: the x with P(B_1 > x) = p."""
    return -special.ndtri(np.asarray(p, dtype=float))


@dataclass(frozen=True)
class EconomyParams:
    """Drift of the regional economy and linear contagion coefficient."""

    beta: float
    alpha: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and math.isfinite(self.alpha)):
            raise DomainError("economy parameters must be finite")
        if self.alpha < 0:
            raise DomainError(f"alpha must be nonnegative, got {self.alpha}")

    @property
    def regime(self) -> str:
        if self.beta < 0:
            return "negative"
        return "neutral" if self.beta == 0 else "positive"


@dataclass(frozen=True)
class ScalingConstants:
    T_ae: float
    p_aed: float
    rho: float
    c_alpha: float
    ur_upper: float
    theta_star: float
    theta_value: float


# ---------------------------------------------------------------------------
# hitting laws
# ---------------------------------------------------------------------------


def survival_prob_drifted(z, beta: float):
    """P(z + beta*t + B_t stays positive forever) = 1 - exp(-2 beta z^+), for beta > 0."""
    if not beta > 0:
        raise DomainError(f"survival probability needs beta > 0, got {beta}")
    z = np.maximum(np.asarray(z, dtype=float), 0.0)
    out = -np.expm1(-2.0 * beta * z)
    return float(out) if out.ndim == 0 else out


def psi(t, x, beta: float):
    """P(inf_{s<=t} (x + beta*s + B_s) > 0) for x >= 0, t > 0.

    Solves Psi_t = beta Psi_x + Psi_xx / 2 with Psi(t, 0) = 0 and Psi(0, x) = 1{x > 0}.
    """
    out = 1.0 - _first_passage(t, x, beta)
    out = np.where(np.asarray(x) <= 0, 0.0, np.clip(out, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def first_passage_cdf(t, x, beta: float):
    """P(x + beta*s + B_s reaches 0 for some s <= t); equals 1 - psi."""
    out = np.clip(_first_passage(t, x, beta), 0.0, 1.0)
    out = np.where(np.asarray(x) <= 0, 1.0, out)
    return float(out) if out.ndim == 0 else out


def _first_passage(t, x, beta):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(t <= 0):
        raise DomainError("first-passage laws need t > 0")
    sq = np.sqrt(t)
    a = special.ndtr((-x - beta * t) / sq)
    # exp(-2 beta x) * Phi((beta t - x)/sqrt t) in log space, stable for large |beta x|
    b = np.exp(-2.0 * beta * x + special.log_ndtr((beta * t - x) / sq))
    return a + b


def bridge_cross_prob(a, b, dt):
    """Probability that a Brownian bridge from a > 0 to b > 0 over time dt touches 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(dt <= 0):
        raise DomainError("bridge step must be positive")
    out = np.exp(-2.0 * np.maximum(a, 0.0) * np.maximum(b, 0.0) / dt)
    return float(out) if out.ndim == 0 else out


def ruin_reach_prob(delta: float, b: float) -> float:
    """P(delta + B hits b before 0) = delta / b for 0 < delta < b."""
    if not 0 < delta < b:
        raise DomainError(f"ruin probability needs 0 < delta < b, got delta={delta}, b={b}")
    return delta / b


# ---------------------------------------------------------------------------
# scaling constants
# ---------------------------------------------------------------------------


def _check_ae(alpha: float, eps: float):
    if not 0 < eps < 1:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    if alpha < 0 or alpha * eps >= 1:
        raise DomainError(f"need 0 <= alpha and alpha*eps < 1, got alpha={alpha}, eps={eps}")


def _entropy(eps: float) -> float:
    return -eps * math.log(eps) - (1 - eps) * math.log1p(-eps)


def _q(eps: float) -> float:
    return float(ntail_inv(0.5 * eps * (1 - eps) ** ((1 - eps) / eps)))


def h_alpha_eps(alpha: float, eps: float, T: float) -> float:
    """Exponential rate bounding the chance that a fraction eps defaults before T."""
    _check_ae(alpha, eps)
    if not T > 0:
        raise DomainError("T must be positive")
    # log(2 * tail) via log_ndtr of the negated argument
    lt = math.log(2.0) + float(special.log_ndtr(-(1 - alpha * eps) / math.sqrt(T)))
    return max(eps * lt + _entropy(eps), H_CLAMP)


def t_alpha_eps(alpha: float, eps: float) -> float:
    """Root in T of h_alpha_eps."""
    _check_ae(alpha, eps)
    return ((1 - alpha * eps) / _q(eps)) ** 2


def p_alpha_eps_delta(alpha: float, eps: float, delta: float) -> float:
    """Probability that an unhit driftless bank sits above alpha + delta at time T_{alpha,eps}."""
    _check_ae(alpha, eps)
    if not delta > 0:
        raise DomainError("delta must be positive")
    return float(ntail(((alpha + delta) / (1 - alpha * eps) - 1) * _q(eps)))


def theta_objective(theta):
    return theta * -np.expm1(-2.0 / np.square(theta))


def _theta_star() -> tuple[float, float]:
    res = optimize.minimize_scalar(lambda th: -theta_objective(th), bracket=(0.1, 1.0, 10.0),
                                   method="golden", tol=1e-10)
    th = float(res.x)
    return th, float(theta_objective(th))


def rho_alpha(alpha: float) -> float:
    """Fixed-(eps, delta) lower-bound factor, two-branch form."""
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    if alpha > 1:
        inner = float(ntail_inv((1 / (4 * alpha)) * (1 - 1 / (2 * alpha)) ** (2 * alpha - 1)))
        return (alpha - 0.5) * float(ntail((4 * alpha - 1) * inner))
    return 0.5 * alpha * float(ntail((5 * alpha - 2) / (2 - alpha) * float(ntail_inv(0.125))))


def scaling_constants(alpha: float) -> ScalingConstants:
    """Constants of the neutral-regime bounds at eps = min(1/2, 1/(2 alpha)), delta = alpha.

    For alpha = 0 the time and probability entries are taken at eps = 1/2, delta = 1/2
    (delta = alpha would be degenerate); rho and c_alpha are then 0.
    """
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    eps = 0.5 if alpha <= 1 else 1 / (2 * alpha)
    delta = alpha if alpha > 0 else 0.5
    th, val = _theta_star()
    rho = rho_alpha(alpha)
    return ScalingConstants(
        T_ae=t_alpha_eps(alpha, eps),
        p_aed=p_alpha_eps_delta(alpha, eps, delta),
        rho=rho,
        c_alpha=val * min(1.0, rho),
        ur_upper=UR_UPPER,
        theta_star=th,
        theta_value=val,
    )


def budget_bound_negative(beta: float) -> float:
    """Upper bound -2/beta on expected survivors in a negative economy."""
    if not beta < 0:
        raise DomainError(f"bound needs beta < 0, got {beta}")
    return -2.0 / beta


def limit_survival_fraction(beta: float, theta: InitialDistribution) -> float:
    """1 - E exp(-2 beta Z) for Z ~ theta."""
    if not beta > 0:
        raise DomainError(f"limit survival needs beta > 0, got {beta}")
    k = 2.0 * beta
    lo, hi = theta.support
    if theta.kind == "dirac":
        return float(-math.expm1(-k * lo))
    if theta.kind == "uniform":
        # E e^{-kZ} = (e^{-k lo} - e^{-k hi}) / (k (hi - lo))
        m = math.exp(-k * lo) * -math.expm1(-k * (hi - lo)) / (k * (hi - lo))
        return 1.0 - m
    m, _ = integrate.quad(lambda u: math.exp(-k * float(theta.quantile(u))), 0.0, 1.0,
                          limit=200, epsabs=1e-12)
    return 1.0 - m
