"""
Analytics and path sampling for the environment chain J.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .errors import DegenerateChainError, ModelError
from .model import EnvironmentModel, FloatArray

logger = logging.getLogger(__name__)

IntArray = npt.NDArray[np.int64]

CONDITION_LIMIT = 1e12
STATIONARY_RESIDUAL = 1e-10
# |q_j - q_k| below this fraction of max(q_j, q_k, 1) counts as equal rates
EQUAL_RATE_THRESHOLD = 1e-9


@dataclass(frozen=True, eq=False)
class StationaryLaw:
    pi: FloatArray

    @property
    def matrix(self) -> FloatArray:
        """Pi: every row equals pi."""
        return np.tile(self.pi, (self.pi.shape[0], 1))


@dataclass(frozen=True, eq=False)
class FundamentalMatrix:
    upsilon: FloatArray


@dataclass(frozen=True, eq=False)
class EnvironmentPath:
    """Realisation of J on [0, horizon]: ``states[s]`` holds from ``entry_times[s]``."""

    states: IntArray
    entry_times: FloatArray
    horizon: float

    @property
    def switches(self) -> int:
        return int(self.states.shape[0]) - 1

    @property
    def boundaries(self) -> FloatArray:
        """Segment end points, ``entry_times`` followed by the horizon."""
        return np.append(self.entry_times, self.horizon)

    @property
    def durations(self) -> FloatArray:
        return np.diff(self.boundaries)

    def occupation_times(self, n_states: int) -> FloatArray:
        """Total time spent in each state."""
        return np.bincount(self.states, weights=self.durations, minlength=n_states).astype(np.float64)


def stationary_distribution(env: EnvironmentModel) -> StationaryLaw:
    """Solve pi Q = 0, sum(pi) = 1 with the last balance equation replaced by normalisation."""
    q = env.rates
    n = env.n_states
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0

    if n > 1 and np.linalg.cond(a) > CONDITION_LIMIT:
        raise DegenerateChainError("stationary system is singular or ill-conditioned; is the chain irreducible?")
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateChainError(f"stationary system could not be solved: {exc}") from exc

    scale = max(1.0, float(np.max(np.abs(q))))
    residual = float(np.max(np.abs(pi @ q)))
    if np.any(pi < -STATIONARY_RESIDUAL) or residual > STATIONARY_RESIDUAL * scale:
        raise DegenerateChainError(f"stationary law failed its balance check (residual {residual:.3g})")
    pi = np.clip(pi, 0.0, None)
    return StationaryLaw(pi / pi.sum())


def fundamental_matrix(env: EnvironmentModel, law: StationaryLaw) -> FundamentalMatrix:
    """Upsilon = (Pi - Q)^-1 - Pi."""
    big_pi = law.matrix
    try:
        inverse = np.linalg.inv(big_pi - env.rates)
    except np.linalg.LinAlgError as exc:
        raise DegenerateChainError(f"Pi - Q is not invertible: {exc}") from exc
    if not np.all(np.isfinite(inverse)):
        raise DegenerateChainError("Pi - Q inverse is not finite")
    return FundamentalMatrix(inverse - big_pi)


def _rates_equal(a: float, b: float) -> bool:
    return abs(a - b) < EQUAL_RATE_THRESHOLD * max(a, b, 1.0)


def at_most_one_switch_probability(env: EnvironmentModel, j: int, horizon: float) -> float:
    """P(J makes at most one jump on [0, horizon] | J(0) = j)."""
    if horizon < 0:
        raise ModelError(f"horizon must be >= 0, got {horizon}")
    q = env.exit_rates
    qj = float(q[j])
    total = math.exp(-qj * horizon)
    for k in range(env.n_states):
        qjk = float(env.rates[j, k])
        if k == j or qjk == 0.0:
            continue
        qk = float(q[k])
        if _rates_equal(qj, qk):
            total += qjk * horizon * math.exp(-qj * horizon)
        else:
            total += qjk / (qj - qk) * (math.exp(-qk * horizon) - math.exp(-qj * horizon))
    return min(1.0, max(0.0, total))


def single_switch_density(env: EnvironmentModel, j: int, k: int, tau: float, horizon: float) -> float:
    """Density of {first jump j -> k at tau, no further jump before horizon}."""
    qjk = float(env.rates[j, k])
    if qjk <= 0.0:
        return 0.0
    q = env.exit_rates
    return qjk * math.exp(-float(q[j]) * tau - float(q[k]) * (horizon - tau))


def sample_environment_path(
    env: EnvironmentModel,
    j0: int,
    horizon: float,
    rng: np.random.Generator,
) -> EnvironmentPath:
    """Embedded-chain sampling of J on [0, horizon] started in ``j0``."""
    exit_rates = env.exit_rates
    jump_cdf = env.jump_cdf
    last = env.n_states - 1

    states = [j0]
    times = [0.0]
    state, t = j0, 0.0
    while True:
        q = exit_rates[state]
        if q <= 0.0:
            break
        t += rng.exponential(1.0 / q)
        if t >= horizon:
            break
        state = min(int(np.searchsorted(jump_cdf[state], rng.random(), side="right")), last)
        states.append(state)
        times.append(t)
    return EnvironmentPath(np.asarray(states, dtype=np.int64), np.asarray(times, dtype=np.float64), horizon)
