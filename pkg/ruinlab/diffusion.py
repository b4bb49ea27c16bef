"""
Diffusion approximation of the multivariate ruin probability.

The centred claims process is replaced by the Brownian motion of the limit
theorem. The limit has drift ``r - lambda_bar`` and covariance ``Sigma``, and
its first-passage probabilities are evaluated as follows:

- one line: the reflection-principle closed form;
- two lines: the killed-density series of a Brownian motion in a wedge,
  integrated over the wedge;
- more lines: pairwise survivals combined by the Bhansali linear rule
  and inclusion-exclusion.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cache

import numpy as np

from .errors import DimensionTooLargeError, ModelError, NearDegenerateCorrelationError, SeriesTruncationError
from .markov import FundamentalMatrix, StationaryLaw, fundamental_matrix, stationary_distribution
from .model import FloatArray, ModeKind, RiskModel, RuinQuery
from .numerics import QuadratureConfig, adaptive_quadrature, bessel_ie, log_normal_cdf, normal_cdf

logger = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-10
PSD_FLOOR = -1e-10
CORRELATION_LIMIT = 1.0 - 1e-9
SERIES_CHUNK = 32
SERIES_CAP = 500
MAX_ANALYTIC_DIMENSION = 12
RADIAL_WINDOW_SD = 12.0


# ============================================================================
# Limit moments and covariance
# ============================================================================


@dataclass(frozen=True)
class Regime:
    """Scaling regime (delta, alpha) of the limit theorem.

    Arrival rates grow like n and environment rates like n**alpha; the
    claims process is centred and divided by n**delta.
    """

    delta: float
    alpha: float

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ModelError(f"alpha must be > 0, got {self.alpha}")
        expected = 0.5 if self.alpha >= 1 else 1.0 - self.alpha / 2
        if not math.isclose(self.delta, expected, rel_tol=0, abs_tol=1e-12):
            raise ModelError(f"regime (delta={self.delta}, alpha={self.alpha}) is not a limit regime")

    @classmethod
    def for_alpha(cls, alpha: float) -> Regime:
        return cls(0.5 if alpha >= 1 else 1.0 - alpha / 2, alpha)

    @property
    def has_claim_noise(self) -> bool:
        return self.alpha >= 1

    @property
    def has_environment_noise(self) -> bool:
        return self.alpha <= 1

    def __str__(self) -> str:
        return f"(delta={self.delta:g}, alpha={self.alpha:g})"


DEFAULT_REGIME = Regime(0.5, 1.0)


@dataclass(frozen=True, eq=False)
class AsymptoticMoments:
    lambda_bar: FloatArray
    m2_bar: FloatArray
    sigma2_bar: FloatArray
    beta_bar: FloatArray


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    """Drift and covariance pieces of the limiting Brownian motion."""

    drift: FloatArray
    sigma1: FloatArray
    sigma2: FloatArray
    sigma3: FloatArray
    sigma: FloatArray
    regime: Regime

    def correlation(self, a: int = 0, b: int = 1) -> float:
        return float(self.sigma[a, b] / math.sqrt(self.sigma[a, a] * self.sigma[b, b]))


def asymptotic_moments(model: RiskModel, law: StationaryLaw, fundamental: FundamentalMatrix) -> AsymptoticMoments:
    lam = model.arrival_rates
    mu = model.claim_means
    pi = law.pi

    weighted = lam * mu
    lambda_bar = weighted @ pi
    m2_bar = (lam * mu**2) @ pi
    sigma2_bar = (lam * model.claim_variances) @ pi
    beta_bar = 2.0 * weighted @ (pi[:, None] * fundamental.upsilon) @ weighted.T

    asymmetry = float(np.max(np.abs(beta_bar - beta_bar.T))) if beta_bar.size else 0.0
    if asymmetry > SYMMETRY_TOLERANCE:
        logger.warning("beta_bar asymmetric by %.3g; using its symmetric part", asymmetry)
        beta_bar = 0.5 * (beta_bar + beta_bar.T)
    return AsymptoticMoments(lambda_bar, m2_bar, sigma2_bar, beta_bar)


def covariance(model: RiskModel, moments: AsymptoticMoments, regime: Regime = DEFAULT_REGIME) -> DiffusionSpec:
    sigma1 = np.diag(moments.sigma2_bar)
    sigma2 = np.diag(moments.m2_bar)
    sigma3 = moments.beta_bar
    sigma = np.zeros_like(sigma3)
    if regime.has_claim_noise:
        sigma = sigma + sigma1 + sigma2
    if regime.has_environment_noise:
        sigma = sigma + sigma3

    floor = float(np.min(np.linalg.eigvalsh(sigma)))
    if floor < PSD_FLOOR:
        raise ModelError(f"limit covariance is not positive semidefinite (smallest eigenvalue {floor:.3g})")
    return DiffusionSpec(
        drift=model.premiums - moments.lambda_bar,
        sigma1=sigma1,
        sigma2=sigma2,
        sigma3=sigma3,
        sigma=sigma,
        regime=regime,
    )


def diffusion_spec(model: RiskModel, regime: Regime = DEFAULT_REGIME) -> DiffusionSpec:
    """Stationary law, fundamental matrix, moments and covariance in one call."""
    law = stationary_distribution(model.environment)
    return covariance(model, asymptotic_moments(model, law, fundamental_matrix(model.environment, law)), regime)


# ============================================================================
# Brownian first passage
# ============================================================================


def univariate_bm_ruin(u: float, drift: float, variance: float, horizon: float) -> float:
    """P(inf_{t <= T} (u + drift*t - B(t)) < 0) for B with variance rate ``variance``."""
    if variance <= 0:
        raise ModelError(f"variance must be > 0, got {variance}")
    if horizon <= 0 or u < 0:
        raise ModelError(f"need horizon > 0 and u >= 0, got horizon={horizon}, u={u}")
    if u == 0:
        return 1.0
    sd = math.sqrt(variance * horizon)
    direct = normal_cdf((-u - drift * horizon) / sd)
    log_reflected = -2.0 * drift * u / variance + log_normal_cdf((-u + drift * horizon) / sd)
    reflected = math.exp(log_reflected) if log_reflected < 700 else math.inf
    return min(1.0, max(0.0, direct + reflected))


def _series_coefficients(order_step: float, theta0: float, x: float, tol: float) -> FloatArray:
    """``sin(n pi theta0 / beta) * ive(n pi / beta, x)`` for n = 1..N, N chosen adaptively.

    A term is dropped once its Bessel bound falls below ``tol`` times the sum
    of the bounds so far.
    """
    coefficients: list[FloatArray] = []
    bound_sum = 0.0
    n_first = 1
    while True:
        n = np.arange(n_first, n_first + SERIES_CHUNK)
        if n[-1] > SERIES_CAP:
            raise SeriesTruncationError(f"Bessel series did not settle within {SERIES_CAP} terms (x={x:.6g})")
        bounds = bessel_ie(n * order_step, x)
        coefficients.append(bounds * np.sin(n * order_step * theta0))
        bound_sum += float(np.sum(np.abs(bounds)))
        if bounds[-1] <= tol * bound_sum:
            break
        n_first += SERIES_CHUNK
    return np.concatenate(coefficients)


def bivariate_bm_joint_survival(
    u1: float,
    u2: float,
    drift1: float,
    drift2: float,
    cov: FloatArray,
    horizon: float,
    tol: float = 1e-6,
) -> float:
    """P(both u_i + drift_i*t - B_i(t) stay >= 0 on [0, T]) for correlated B.

    The surplus pair is mapped to a planar Brownian motion with independent
    unit coordinates, started inside a wedge of opening
    ``beta = arccos(-rho)``. Its killed transition density is a Fourier-Bessel
    series in the angle, the drift enters through a Girsanov weight, and the
    density is integrated over the wedge.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T) or cov[0, 0] <= 0 or cov[1, 1] <= 0:
        raise ModelError("cov must be a symmetric 2x2 matrix with positive diagonal")
    if horizon <= 0 or tol <= 0 or u1 < 0 or u2 < 0:
        raise ModelError("need horizon > 0, tol > 0 and non-negative reserves")
    s1, s2 = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    rho = float(cov[0, 1] / (s1 * s2))
    if abs(rho) >= CORRELATION_LIMIT:
        raise NearDegenerateCorrelationError(f"correlation {rho:.12f} too close to +-1")
    if u1 == 0 or u2 == 0:
        return 0.0

    surv1 = 1.0 - univariate_bm_ruin(u1, drift1, cov[0, 0], horizon)
    surv2 = 1.0 - univariate_bm_ruin(u2, drift2, cov[1, 1], horizon)
    if min(1.0 - surv1, 1.0 - surv2) < 1e-3 * tol:
        return surv1 * surv2

    # unit-variance coordinates, then Cholesky to independent ones
    z = np.array([u1 / s1, u2 / s2])
    d = np.array([drift1 / s1, drift2 / s2])
    root = math.sqrt(1.0 - rho * rho)
    start = np.array([z[0], (z[1] - rho * z[0]) / root])
    nu = np.array([d[0], (d[1] - rho * d[0]) / root])

    beta = math.acos(-rho)
    phi0 = -math.asin(rho)
    r0 = float(np.hypot(start[0], start[1]))
    theta0 = math.atan2(start[1], start[0]) - phi0
    order_step = math.pi / beta
    nu_sq = float(nu @ nu)
    girsanov_offset = -float(nu @ start) - 0.5 * nu_sq * horizon

    inner_cfg = QuadratureConfig(rel_tol=tol / 10, abs_tol=tol * 1e-4)
    outer_cfg = QuadratureConfig(rel_tol=tol, abs_tol=tol * 1e-3)
    r_max = r0 + math.sqrt(nu_sq) * horizon + RADIAL_WINDOW_SD * math.sqrt(horizon)
    series_lengths: list[int] = []

    def radial(r: float) -> float:
        radial_log = -((r - r0) ** 2) / (2.0 * horizon)
        if radial_log < -745.0:
            return 0.0
        coeffs = _series_coefficients(order_step, theta0, r * r0 / horizon, tol)
        series_lengths.append(coeffs.shape[0])
        orders = np.arange(1, coeffs.shape[0] + 1) * order_step
        prefactor = 2.0 / (beta * horizon) * r * math.exp(radial_log)

        def angular(theta: float) -> float:
            phi = theta + phi0
            weight = math.exp(r * (nu[0] * math.cos(phi) + nu[1] * math.sin(phi)) + girsanov_offset)
            return float(coeffs @ np.sin(orders * theta)) * weight

        inner = adaptive_quadrature(angular, 0.0, beta, inner_cfg)
        if not inner.converged:
            logger.debug("angular integral at r=%.6g unconverged (error %.3g)", r, inner.error)
        return prefactor * inner.value

    joint = adaptive_quadrature(radial, 0.0, r_max, outer_cfg).require("bivariate joint survival")
    logger.debug(
        "joint survival rho=%.4f: %d radial nodes, longest series %d terms",
        rho,
        len(series_lengths),
        max(series_lengths, default=0),
    )
    return min(1.0, max(0.0, joint))


# ============================================================================
# Multivariate ruin
# ============================================================================


@dataclass(frozen=True, eq=False)
class DiffusionEstimate:
    probability: float
    approximate_combination: bool
    spec: DiffusionSpec


def _pair_survival(
    i: int, j: int, reserves: FloatArray, spec: DiffusionSpec, horizon: float, marginal: list[float], tol: float
) -> float:
    cov = spec.sigma[np.ix_([i, j], [i, j])]
    try:
        return bivariate_bm_joint_survival(
            float(reserves[i]), float(reserves[j]), float(spec.drift[i]), float(spec.drift[j]), cov, horizon, tol
        )
    except NearDegenerateCorrelationError:
        rho = spec.correlation(i, j)
        logger.warning("lines %d and %d have correlation %.10f; using the Frechet bound", i + 1, j + 1, rho)
        if rho > 0:
            return min(marginal[i], marginal[j])
        return max(0.0, marginal[i] + marginal[j] - 1.0)


def multivariate_ruin_diffusion(
    model: RiskModel,
    query: RuinQuery,
    regime: Regime = DEFAULT_REGIME,
    tol: float = 1e-6,
) -> DiffusionEstimate:
    """Ruin probability of the Brownian counterpart of the risk process.

    Drift, covariance, reserves and horizon are used unscaled. The result
    does not depend on the initial environment state.
    """
    query.check(model)
    spec = diffusion_spec(model, regime)
    reserves = query.reserves
    horizon = query.horizon
    mode = query.mode
    members = mode.members(model.dimension)

    if len(members) > MAX_ANALYTIC_DIMENSION:
        raise DimensionTooLargeError(
            f"{len(members)} lines exceed the analytic limit of {MAX_ANALYTIC_DIMENSION}; use Monte Carlo"
        )

    ruin = [
        univariate_bm_ruin(float(reserves[i]), float(spec.drift[i]), float(spec.sigma[i, i]), horizon)
        for i in range(model.dimension)
    ]
    if mode.kind is ModeKind.MARGINAL:
        return DiffusionEstimate(ruin[members[0]], False, spec)

    marginal = [1.0 - p for p in ruin]

    @cache
    def pair(i: int, j: int) -> float:
        return _pair_survival(i, j, reserves, spec, horizon, marginal, tol)

    def survival(subset: tuple[int, ...]) -> float:
        if not subset:
            return 1.0
        if len(subset) == 1:
            return marginal[subset[0]]
        if len(subset) == 2:
            return pair(*subset)
        product = math.prod(marginal[i] for i in subset)
        if product == 0.0:
            return 0.0
        correction = sum(pair(i, j) / (marginal[i] * marginal[j]) - 1.0 for i, j in itertools.combinations(subset, 2))
        return product * (1.0 + correction)

    approximate = len(members) > 2
    if approximate:
        logger.warning("%d lines: joint survival uses the approximate pairwise combination", len(members))

    if mode.kind is ModeKind.ANY:
        value = 1.0 - survival(members)
    else:
        value = sum(
            (-1) ** size * survival(subset)
            for size in range(len(members) + 1)
            for subset in itertools.combinations(members, size)
        )
    return DiffusionEstimate(min(1.0, max(0.0, value)), approximate, spec)
