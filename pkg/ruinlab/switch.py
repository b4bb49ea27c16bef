"""
Single-switch approximation.

Conditional on the environment making at most one jump on [0, T], the lines
are independent compound-Poisson processes with (at most) two intensity
segments. Each line's ruin probability comes from one of two routes:

- the exponential-claims closed form, where the segment intensities are
  averaged into one effective rate;
- a decomposition at the switch time, where the surplus law at the switch
  time conditional on survival is approximated through a Brownian scaling
  factor.

The per-line values are then averaged over the switch time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

from .diffusion import univariate_bm_ruin
from .errors import DegenerateSurvivalError, ModelError, QuadratureError
from .markov import at_most_one_switch_probability, single_switch_density
from .model import RiskModel, RuinQuery
from .numerics import QuadratureConfig, adaptive_quadrature, log_normal_cdf, normal_cdf, normal_pdf

__all__ = [
    "QuadratureConfig",
    "SwitchScenario",
    "bm_scaling_factor",
    "chi",
    "exp_ruin_bound",
    "exp_single_switch_ruin",
    "general_single_switch_ruin",
    "lambda_star",
    "scenario_ruin",
]

logger = logging.getLogger(__name__)

CLAMP_BAND = 1e-8
SURPLUS_WINDOW_SD = 12.0
DEGENERATE_SURVIVAL = 1e-300
F3_FLOOR = 1e-14
NEGLIGIBLE_RUIN = 1e-5


@dataclass(frozen=True)
class SwitchScenario:
    """Line ``component`` sees state ``start_state`` on [0, tau] and ``target_state`` on (tau, T]."""

    component: int
    start_state: int
    target_state: int
    switch_time: float
    horizon: float

    def __post_init__(self) -> None:
        if not 0.0 < self.switch_time <= self.horizon:
            raise ModelError(f"switch time must lie in (0, T], got tau={self.switch_time}, T={self.horizon}")
        if self.start_state == self.target_state and self.switch_time != self.horizon:
            raise ModelError("a no-switch scenario must have tau = T")

    @classmethod
    def no_switch(cls, component: int, state: int, horizon: float) -> SwitchScenario:
        return cls(component, state, state, horizon, horizon)

    @property
    def is_switch(self) -> bool:
        return self.start_state != self.target_state


def lambda_star(lam_j: float, lam_k: float, tau: float, horizon: float) -> float:
    """Time-average of an intensity that is ``lam_j`` up to tau and ``lam_k`` after."""
    if horizon <= 0 or not 0.0 <= tau <= horizon:
        raise ModelError(f"need 0 <= tau <= T and T > 0, got tau={tau}, T={horizon}")
    return (lam_j * tau + lam_k * (horizon - tau)) / horizon


# ============================================================================
# Exponential claims
# ============================================================================


def _zero_premium_ruin(u: float, mu: float, rate: float, horizon: float) -> float:
    """Ruin without premium income: P(total claims on [0, T] exceed u)."""
    mean = rate * horizon
    top = int(mean + 12.0 * math.sqrt(mean) + 30.0)
    k = np.arange(1, top + 1)
    return float(np.sum(stats.poisson.pmf(k, mean) * special.gammaincc(k, u / mu)))


def exp_ruin_bound(u: float, r: float, mu: float, rate: float, horizon: float) -> float:
    """Exponential-martingale upper bound on finite-time ruin with Exp(mu) claims.

    For 0 < theta < 1/mu the claims surplus has cumulant
    kappa(theta) = rate*theta*mu/(1 - theta*mu) - r*theta, and Doob's
    inequality gives psi(u, T) <= exp(-theta*u + T*max(kappa(theta), 0)).
    The bound is minimised over theta; the exponent is convex in theta.
    """
    if rate == 0.0:
        return 0.0
    if u <= 0.0:
        return 1.0

    def exponent(theta: float) -> float:
        kappa = rate * theta * mu / (1.0 - theta * mu) - r * theta
        return -theta * u + horizon * max(kappa, 0.0)

    best = optimize.minimize_scalar(exponent, bounds=(0.0, (1.0 - 1e-9) / mu), method="bounded")
    return math.exp(min(0.0, float(best.fun)))


def exp_single_switch_ruin(
    u: float,
    r: float,
    mu: float,
    lam_j: float,
    lam_k: float,
    tau: float,
    horizon: float,
    quad: QuadratureConfig | None = None,
) -> float:
    """Finite-time ruin of one line with Exp(mu) claims and a single intensity switch at ``tau``.

    The intensity path enters only through its time-average ``lambda_star``.
    When the reserve is far beyond what the horizon can reach, the theta
    integral cancels against the leading term to rounding level; the value
    is then taken from ``exp_ruin_bound`` instead.
    """
    if u < 0 or r < 0 or mu <= 0 or horizon <= 0:
        raise ModelError(f"need u >= 0, r >= 0, mu > 0, T > 0; got u={u}, r={r}, mu={mu}, T={horizon}")
    rate = lambda_star(lam_j, lam_k, tau, horizon)
    if rate == 0.0:
        return 0.0
    if r == 0.0:
        return _zero_premium_ruin(u, mu, rate, horizon)
    cfg = quad or QuadratureConfig()
    bound = exp_ruin_bound(u, r, mu, rate, horizon)
    if bound <= cfg.abs_tol:
        logger.debug("ruin bound %.3g below tolerance (u=%g, T=%g); returning 0", bound, u, horizon)
        return 0.0

    load = rate * mu / r
    c = math.sqrt(load)
    a = u * math.sqrt(rate) / math.sqrt(r * mu)
    growth = 2.0 * horizon * math.sqrt(r * rate / mu)
    decay = (r / mu + rate) * horizon

    def integrand(theta: float) -> float:
        cos_t = math.cos(theta)
        f1 = load * math.exp(growth * cos_t - decay + (u / mu) * (c * cos_t - 1.0))
        f3 = (1.0 - c) ** 2 + 4.0 * c * math.sin(0.5 * theta) ** 2
        if f3 < F3_FLOOR:
            return f1 * 2.0 * (a + 1.0) / c
        f2 = 2.0 * math.sin(a * math.sin(theta) + theta) * math.sin(theta)
        return f1 * f2 / f3

    result = adaptive_quadrature(integrand, 0.0, math.pi, cfg)
    leading = load * math.exp(-(1.0 / mu - rate / r) * u) if r > rate * mu else 1.0
    noise = result.error / math.pi
    if not result.converged and math.isfinite(result.value) and bound <= max(noise, NEGLIGIBLE_RUIN):
        # the bound already pins the value down to the integral's own noise
        logger.debug("theta integral unconverged (error %.3g) under ruin bound %.3g (u=%g)", noise, bound, u)
        return min(bound, max(0.0, leading - result.value / math.pi))
    raw = leading - result.require("single-switch theta integral") / math.pi

    band = max(CLAMP_BAND, noise)
    if not -band <= raw <= 1.0 + band:
        raise QuadratureError(f"single-switch closed form left [0, 1]: {raw:.3e} (u={u}, tau={tau}, T={horizon})")
    return min(1.0, bound, max(0.0, raw))


# ============================================================================
# General claims: decomposition at the switch time
# ============================================================================


def bm_scaling_factor(v: float, u: float, tau: float, drift: float, var: float) -> float:
    """Ratio of the surplus density at tau given survival to its unconditional density.

    Both densities are those of the matched Brownian motion with ``drift``
    and variance rate ``var``.
    """
    if u <= 0 or tau <= 0 or var <= 0:
        raise ModelError(f"need u > 0, tau > 0, var > 0; got u={u}, tau={tau}, var={var}")
    if v < 0:
        return 0.0
    spread = var * tau
    sd = math.sqrt(spread)
    numerator = -math.expm1(-4.0 * u * (u + v) / (2.0 * spread))
    log_reflected = -2.0 * drift * u / var + log_normal_cdf((-u + drift * tau) / sd)
    denominator = normal_cdf((drift * tau + u) / sd) - (math.exp(log_reflected) if log_reflected < 700 else math.inf)
    if not denominator >= DEGENERATE_SURVIVAL:
        raise DegenerateSurvivalError(f"survival to tau={tau} is numerically zero (u={u}, drift={drift})")
    return numerator / denominator


def _segment_ruin(model: RiskModel, i: int, state: int, u: float, horizon: float, quad: QuadratureConfig) -> float:
    """Ruin of line i within ``horizon`` while the environment stays in ``state``."""
    if horizon <= 0.0:
        return 0.0
    rate = float(model.arrival_rates[i, state])
    if rate == 0.0:
        return 0.0
    dist = model.claims[i][state]
    r = float(model.premiums[i])
    if dist.is_exponential:
        return exp_single_switch_ruin(u, r, dist.mean, rate, rate, horizon, horizon, quad)
    mean, var = float(model.claim_means[i, state]), float(model.claim_variances[i, state])
    return univariate_bm_ruin(u, r - rate * mean, rate * (var + mean * mean), horizon)


def general_single_switch_ruin(
    model: RiskModel,
    i: int,
    u: float,
    j: int,
    k: int,
    tau: float,
    horizon: float,
    quad: QuadratureConfig | None = None,
) -> float:
    """Ruin of line i when the environment jumps from j to k at ``tau``.

    Ruin either happens on [0, tau] or, after surviving to tau with surplus v,
    on the remaining horizon started from v in state k.
    """
    if not 0.0 < tau <= horizon:
        raise ModelError(f"switch time must lie in (0, T], got tau={tau}, T={horizon}")
    cfg = quad or QuadratureConfig()
    early = _segment_ruin(model, i, j, u, tau, cfg)
    if tau == horizon:
        return early
    survived = 1.0 - early
    if survived <= 0.0:
        return early

    rate = float(model.arrival_rates[i, j])
    r = float(model.premiums[i])
    remaining = horizon - tau
    if rate == 0.0:
        return _segment_ruin(model, i, k, u + r * tau, remaining, cfg)

    mean_claim, var_claim = float(model.claim_means[i, j]), float(model.claim_variances[i, j])
    drift = r - rate * mean_claim
    var = rate * (var_claim + mean_claim * mean_claim)
    centre = u + drift * tau
    sd = math.sqrt(var * tau)
    upper = max(centre, 0.0) + SURPLUS_WINDOW_SD * sd

    def weight(v: float) -> float:
        density = normal_pdf((v - centre) / sd) / sd
        if u > 0:
            return bm_scaling_factor(v, u, tau, drift, var) * density
        # the u -> 0 limit of the scaling factor, up to a constant
        return v * density

    total = adaptive_quadrature(weight, 0.0, upper, cfg).require("conditional surplus normalisation")
    if total <= DEGENERATE_SURVIVAL:
        raise DegenerateSurvivalError(f"conditional surplus law at tau={tau} has no mass")
    later = adaptive_quadrature(
        lambda v: weight(v) * _segment_ruin(model, i, k, v, remaining, cfg), 0.0, upper, cfg
    ).require("post-switch ruin integral")
    return min(1.0, max(0.0, early + survived * later / total))


# ============================================================================
# Multivariate single-switch probability
# ============================================================================


def _line_ruin(
    model: RiskModel, i: int, u: float, j: int, k: int, tau: float, horizon: float, quad: QuadratureConfig
) -> float:
    if model.has_state_independent_exponential_claims(i):
        lam = model.arrival_rates[i]
        mu = model.claims[i][j].mean
        return exp_single_switch_ruin(u, float(model.premiums[i]), mu, float(lam[j]), float(lam[k]), tau, horizon, quad)
    return general_single_switch_ruin(model, i, u, j, k, tau, horizon, quad)


def scenario_ruin(model: RiskModel, scenario: SwitchScenario, u: float, quad: QuadratureConfig | None = None) -> float:
    """Ruin probability of one line under a fixed switch scenario, by the route ``chi`` uses."""
    s = scenario
    return _line_ruin(
        model, s.component, u, s.start_state, s.target_state, s.switch_time, s.horizon, quad or QuadratureConfig()
    )


def _chi_from_state(model: RiskModel, query: RuinQuery, j: int, quad: QuadratureConfig) -> float:
    env = model.environment
    horizon = query.horizon
    mode = query.mode
    members = mode.members(model.dimension)
    reserves = query.reserves

    def event(k: int, tau: float) -> float:
        probs = [math.nan] * model.dimension
        for i in members:
            probs[i] = _line_ruin(model, i, float(reserves[i]), j, k, tau, horizon, quad)
        return mode.combine(probs)

    stay = event(j, horizon) * math.exp(-float(env.exit_rates[j]) * horizon)
    switched = 0.0
    for k in range(env.n_states):
        if k == j or env.rates[j, k] <= 0.0:
            continue
        result = adaptive_quadrature(
            lambda tau, k=k: event(k, tau) * single_switch_density(env, j, k, tau, horizon), 0.0, horizon, quad
        )
        switched += result.require(f"switch-time integral {j + 1}->{k + 1}")
        logger.debug("switch %d->%d integral used %d subdivisions", j + 1, k + 1, result.subdivisions)

    weight = at_most_one_switch_probability(env, j, horizon)
    return min(1.0, max(0.0, (switched + stay) / weight))


def chi(model: RiskModel, query: RuinQuery, quad: QuadratureConfig | None = None) -> float:
    """Single-switch approximation of the ruin probability of ``query``.

    With a random initial state the per-state values are averaged over the
    environment's initial law.
    """
    query.check(model)
    cfg = quad or QuadratureConfig()
    if query.initial_state is not None:
        return _chi_from_state(model, query, query.initial_state, cfg)
    law = model.environment.initial_law
    return float(sum(p * _chi_from_state(model, query, j, cfg) for j, p in enumerate(law) if p > 0.0))
