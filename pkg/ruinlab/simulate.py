"""
Exact event-driven Monte Carlo for finite-time ruin.

Paths are simulated in fixed blocks of ``BLOCK_SIZE``; block ``b`` draws from
``rng_stream(seed, b)``. Block boundaries depend only on the path count, so
estimates are identical for any number of workers.
"""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
import psutil

from .diffusion import Regime, asymptotic_moments, covariance
from .errors import ModelError
from .markov import fundamental_matrix, sample_environment_path, stationary_distribution
from .model import BoolArray, FloatArray, RiskModel, RuinMode, RuinQuery
from .numerics import normal_quantile, rng_stream

logger = logging.getLogger(__name__)

BLOCK_SIZE = 4096
THREADS_ENV = "RUINLAB_THREADS"


# ============================================================================
# Results
# ============================================================================


@dataclass(frozen=True, eq=False)
class PathOutcome:
    """Per-line ruin flags; ``ruin_times`` is NaN for lines that survive."""

    ruined: BoolArray
    ruin_times: FloatArray


@dataclass(frozen=True)
class MonteCarloEstimate:
    mode: RuinMode
    hits: int
    n_paths: int
    seed: int
    confidence: float = 0.95

    @property
    def estimate(self) -> float:
        return self.hits / self.n_paths

    @property
    def ci_halfwidth(self) -> float:
        z = normal_quantile(1.0 - (1.0 - self.confidence) / 2.0)
        p = self.estimate
        return z * math.sqrt(p * (1.0 - p) / self.n_paths)

    @property
    def ci_low(self) -> float:
        return max(0.0, self.estimate - self.ci_halfwidth)

    @property
    def ci_high(self) -> float:
        return min(1.0, self.estimate + self.ci_halfwidth)

    def __str__(self) -> str:
        return (
            f"{self.mode.label()}: {self.estimate:.6f} "
            f"[{self.ci_low:.6f}, {self.ci_high:.6f}] ({self.n_paths} paths, seed {self.seed})"
        )


# ============================================================================
# Single path
# ============================================================================


def _initial_state(model: RiskModel, query: RuinQuery, rng: np.random.Generator) -> int:
    if query.initial_state is not None:
        return query.initial_state
    law = model.environment.initial_law
    return min(int(np.searchsorted(np.cumsum(law), rng.random(), side="right")), law.shape[0] - 1)


def simulate_path(model: RiskModel, query: RuinQuery, rng: np.random.Generator) -> PathOutcome:
    """One realisation of every line's surplus over [0, T].

    Claim epochs of line i are the Poisson points of its piecewise-constant
    intensity along the sampled environment path, obtained by inverting the
    cumulative intensity. Surplus only falls at claims, so ruin is checked
    exactly at claim epochs.
    """
    horizon = query.horizon
    path = sample_environment_path(model.environment, _initial_state(model, query, rng), horizon, rng)
    bounds = path.boundaries
    durations = path.durations

    m = model.dimension
    ruined = np.zeros(m, dtype=bool)
    ruin_times = np.full(m, np.nan)
    for i in range(m):
        rates = model.arrival_rates[i, path.states]
        cumulative = np.concatenate(([0.0], np.cumsum(rates * durations)))
        total = float(cumulative[-1])
        count = int(rng.poisson(total)) if total > 0 else 0
        if count == 0:
            continue

        marks = np.sort(rng.uniform(0.0, total, count))
        segment = np.searchsorted(cumulative, marks, side="right") - 1
        epochs = bounds[segment] + (marks - cumulative[segment]) / rates[segment]
        epoch_states = path.states[segment]

        sizes = np.empty(count)
        for state in np.unique(epoch_states):
            mask = epoch_states == state
            sizes[mask] = model.claims[i][state].sample(rng, int(mask.sum()))

        surplus = query.reserves[i] + model.premiums[i] * epochs - np.cumsum(sizes)
        below = np.flatnonzero(surplus < 0.0)
        if below.size:
            ruined[i] = True
            ruin_times[i] = epochs[below[0]]
    return PathOutcome(ruined, ruin_times)


# ============================================================================
# Block scheduling
# ============================================================================


def resolve_threads(threads: int | None) -> int:
    """``None`` reads RUINLAB_THREADS; 0 means one worker per logical CPU."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "")
        try:
            threads = int(raw) if raw else 1
        except ValueError as exc:
            raise ModelError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if threads < 0:
        raise ModelError(f"threads must be >= 0, got {threads}")
    if threads == 0:
        return psutil.cpu_count(logical=True) or 1
    return threads


def _blocks(n_paths: int) -> list[tuple[int, int]]:
    return [(b, min(BLOCK_SIZE, n_paths - b * BLOCK_SIZE)) for b in range(math.ceil(n_paths / BLOCK_SIZE))]


def _map_blocks(
    worker: Callable[[tuple[Any, ...]], Any], payloads: Sequence[tuple[Any, ...]], threads: int
) -> list[Any]:
    """Run ``worker`` over block payloads; results come back in block order."""
    if threads <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    workers = min(threads, len(payloads))
    logger.debug("dispatching %d blocks to %d worker processes", len(payloads), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, payloads))


def _ruin_block(
    payload: tuple[RiskModel, RuinQuery, tuple[float, ...], tuple[RuinMode, ...], int, int, int],
) -> list[list[int]]:
    model, query, horizons, modes, seed, block, count = payload
    rng = rng_stream(seed, block)
    times = np.empty((count, model.dimension))
    for p in range(count):
        times[p] = simulate_path(model, query, rng).ruin_times
    hits: list[list[int]] = []
    for horizon in horizons:
        flags = times <= horizon
        hits.append([int(mode.hits(flags).sum()) for mode in modes])
    return hits


def estimate_ruin_curve(
    model: RiskModel,
    query: RuinQuery,
    horizons: Sequence[float],
    n_paths: int,
    seed: int = 0,
    threads: int | None = 1,
    modes: Sequence[RuinMode] | None = None,
    confidence: float = 0.95,
) -> list[dict[RuinMode, MonteCarloEstimate]]:
    """Estimates for every horizon in ``horizons`` from one set of paths run to the largest.

    A line counts as ruined by T when its first ruin time is at most T, so
    the curve is nondecreasing in T.
    """
    if n_paths < 1:
        raise ModelError(f"n_paths must be >= 1, got {n_paths}")
    if not 0.0 < confidence < 1.0:
        raise ModelError(f"confidence must lie in (0, 1), got {confidence}")
    grid = tuple(float(t) for t in horizons)
    if not grid or min(grid) <= 0:
        raise ModelError(f"horizons must be positive, got {list(grid)}")
    longest = query.with_horizon(max(grid))
    longest.check(model)
    wanted = tuple(dict.fromkeys(modes or (query.mode,)))
    for mode in wanted:
        mode.check(model.dimension)

    workers = resolve_threads(threads)
    payloads = [(model, longest, grid, wanted, seed, block, count) for block, count in _blocks(n_paths)]
    tallies = np.zeros((len(grid), len(wanted)), dtype=np.int64)
    for block_hits in _map_blocks(_ruin_block, payloads, workers):
        tallies += np.asarray(block_hits, dtype=np.int64)
    return [
        {
            mode: MonteCarloEstimate(mode, int(hits), n_paths, seed, confidence)
            for mode, hits in zip(wanted, row, strict=True)
        }
        for row in tallies
    ]


def estimate_ruin(
    model: RiskModel,
    query: RuinQuery,
    n_paths: int,
    seed: int = 0,
    threads: int | None = 1,
    modes: Sequence[RuinMode] | None = None,
    confidence: float = 0.95,
) -> dict[RuinMode, MonteCarloEstimate]:
    """Monte Carlo estimates for every mode in ``modes`` from one set of paths.

    ``modes`` defaults to the query's own mode. Results depend only on
    ``(seed, n_paths)``, never on ``threads``.
    """
    return estimate_ruin_curve(model, query, [query.horizon], n_paths, seed, threads, modes, confidence)[0]


# ============================================================================
# Scaled-process covariance check
# ============================================================================


@dataclass(frozen=True, eq=False)
class FcltReport:
    """Sample covariance of the scaled claims process at time 1 against its limit."""

    n: float
    regime: Regime
    n_paths: int
    sample: FloatArray
    analytic: FloatArray

    @property
    def relative_errors(self) -> FloatArray:
        """Relative error of each diagonal entry."""
        diag = np.diag(self.analytic)
        return np.abs(np.diag(self.sample) - diag) / diag

    @property
    def correlation_gaps(self) -> FloatArray:
        """|sample - analytic| correlation for each pair of lines, upper triangle."""

        def corr(c: FloatArray) -> FloatArray:
            sd = np.sqrt(np.diag(c))
            return c / np.outer(sd, sd)

        rows, cols = np.triu_indices(self.sample.shape[0], k=1)
        return np.abs(corr(self.sample)[rows, cols] - corr(self.analytic)[rows, cols])

    def passed(self, rel_tol: float = 0.05, corr_tol: float = 0.02) -> bool:
        gaps = self.correlation_gaps
        return bool(np.all(self.relative_errors <= rel_tol) and (gaps.size == 0 or np.all(gaps <= corr_tol)))


def _claims_block(payload: tuple[RiskModel, int, int, int]) -> FloatArray:
    model, seed, block, count = payload
    rng = rng_stream(seed, block)
    env = model.environment
    totals = np.zeros((count, model.dimension))
    start_cdf = np.cumsum(env.initial_law)
    for p in range(count):
        j0 = min(int(np.searchsorted(start_cdf, rng.random(), side="right")), env.n_states - 1)
        occupation = sample_environment_path(env, j0, 1.0, rng).occupation_times(env.n_states)
        for i in range(model.dimension):
            for j in range(env.n_states):
                claims = int(rng.poisson(model.arrival_rates[i, j] * occupation[j]))
                totals[p, i] += model.claims[i][j].sample_total(rng, claims)
    return totals


def scaled_claims_sample(
    model: RiskModel,
    n: float,
    alpha: float,
    n_paths: int,
    seed: int = 0,
    threads: int | None = 1,
) -> FloatArray:
    """Centred, scaled aggregate claims at time 1, one row per path.

    Arrival rates are multiplied by ``n`` and environment rates by
    ``n**alpha``; J(0) is drawn from the stationary law.
    """
    if n_paths < 2:
        raise ModelError(f"n_paths must be >= 2, got {n_paths}")
    regime = Regime.for_alpha(alpha)
    law = stationary_distribution(model.environment)
    moments = asymptotic_moments(model, law, fundamental_matrix(model.environment, law))
    scaled = model.scaled(n, alpha)
    scaled = replace(scaled, environment=replace(scaled.environment, initial_law=law.pi))

    payloads = [(scaled, seed, block, count) for block, count in _blocks(n_paths)]
    totals = np.vstack(_map_blocks(_claims_block, payloads, resolve_threads(threads)))
    return (totals - n * moments.lambda_bar) / n**regime.delta


def fclt_check(
    model: RiskModel,
    n: float,
    alpha: float = 1.0,
    n_paths: int = 100_000,
    seed: int = 0,
    threads: int | None = 1,
) -> FcltReport:
    regime = Regime.for_alpha(alpha)
    sample = scaled_claims_sample(model, n, alpha, n_paths, seed, threads)
    law = stationary_distribution(model.environment)
    spec = covariance(model, asymptotic_moments(model, law, fundamental_matrix(model.environment, law)), regime)
    return FcltReport(n, regime, n_paths, np.atleast_2d(np.cov(sample, rowvar=False)), spec.sigma)
