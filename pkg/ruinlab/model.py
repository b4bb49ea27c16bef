"""
Domain types for the multivariate Markov-modulated risk model.

Each of the m business lines has surplus

    X_i(t) = u_i + r_i t - (claims of line i up to t)

where claims of line i arrive at rate lambda[i, j] and have law F[i, j]
whenever the shared environment chain J sits in state j. Ruin of a line is
the surplus dropping strictly below zero; touching zero is survival.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import numpy.typing as npt
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ModelError

FloatArray = npt.NDArray[np.float64]
BoolArray = npt.NDArray[np.bool_]

ROW_SUM_TOLERANCE = 1e-12
LAW_TOLERANCE = 1e-12


def _frozen_array(values: object, ndim: int) -> FloatArray:
    arr = np.array(values, dtype=np.float64, ndmin=ndim)
    arr.setflags(write=False)
    return arr


# ============================================================================
# Claim distributions
# ============================================================================


class ClaimKind(enum.Enum):
    EXPONENTIAL = "exponential"
    GAMMA = "gamma"
    DETERMINISTIC = "deterministic"


@dataclass(frozen=True)
class ClaimDistribution:
    """Claim-size law of one (line, state) pair.

    ``shape`` is only meaningful for Gamma claims; the Gamma scale is
    ``mean / shape``. Build instances through the named constructors.
    """

    kind: ClaimKind
    mean: float
    shape: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and self.mean > 0):
            raise ModelError(f"{self.kind.value} claim mean must be finite and > 0, got {self.mean}")
        if not (math.isfinite(self.shape) and self.shape > 0):
            raise ModelError(f"claim shape must be finite and > 0, got {self.shape}")

    @classmethod
    def exponential(cls, mean: float) -> ClaimDistribution:
        return cls(ClaimKind.EXPONENTIAL, float(mean))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> ClaimDistribution:
        return cls(ClaimKind.GAMMA, float(shape) * float(scale), float(shape))

    @classmethod
    def deterministic(cls, value: float) -> ClaimDistribution:
        return cls(ClaimKind.DETERMINISTIC, float(value))

    @property
    def is_exponential(self) -> bool:
        return self.kind is ClaimKind.EXPONENTIAL

    def sample(self, rng: np.random.Generator, size: int) -> FloatArray:
        """Draw ``size`` independent claim sizes."""
        if self.kind is ClaimKind.EXPONENTIAL:
            return rng.exponential(self.mean, size)
        if self.kind is ClaimKind.GAMMA:
            return rng.gamma(self.shape, self.mean / self.shape, size)
        return np.full(size, self.mean)

    def sample_total(self, rng: np.random.Generator, count: int) -> float:
        """Sum of ``count`` independent claims, drawn in one step."""
        if count <= 0:
            return 0.0
        if self.kind is ClaimKind.EXPONENTIAL:
            return float(rng.gamma(count, self.mean))
        if self.kind is ClaimKind.GAMMA:
            return float(rng.gamma(count * self.shape, self.mean / self.shape))
        return count * self.mean


def claim_moments(dist: ClaimDistribution) -> tuple[float, float]:
    """Exact (mean, variance) of a claim distribution."""
    if dist.kind is ClaimKind.EXPONENTIAL:
        return dist.mean, dist.mean**2
    if dist.kind is ClaimKind.GAMMA:
        return dist.mean, dist.mean**2 / dist.shape
    return dist.mean, 0.0


# ============================================================================
# Environment and risk model
# ============================================================================


@dataclass(frozen=True, eq=False)
class EnvironmentModel:
    """Finite-state environment chain: generator ``rates`` and law of J(0)."""

    rates: FloatArray
    initial_law: FloatArray

    def __post_init__(self) -> None:
        object.__setattr__(self, "rates", _frozen_array(self.rates, 2))
        object.__setattr__(self, "initial_law", _frozen_array(self.initial_law, 1))

    @classmethod
    def starting_in(cls, rates: Sequence[Sequence[float]] | FloatArray, state: int = 0) -> EnvironmentModel:
        n = len(rates)
        law = np.zeros(n)
        law[state] = 1.0
        return cls(np.asarray(rates, dtype=np.float64), law)

    @property
    def n_states(self) -> int:
        return int(self.rates.shape[0])

    @cached_property
    def exit_rates(self) -> FloatArray:
        """q_k = -Q[k, k]."""
        return _frozen_array(-np.diag(self.rates), 1)

    @cached_property
    def jump_cdf(self) -> FloatArray:
        """Row-wise cumulative jump probabilities of the embedded chain.

        Rows of absorbing states are all ones and are never consulted.
        """
        off = np.array(self.rates, dtype=np.float64)
        np.fill_diagonal(off, 0.0)
        totals = off.sum(axis=1, keepdims=True)
        probs = np.divide(off, totals, out=np.zeros_like(off), where=totals > 0)
        cdf = np.cumsum(probs, axis=1)
        cdf[:, -1] = 1.0
        return _frozen_array(cdf, 2)

    def scaled(self, factor: float) -> EnvironmentModel:
        return EnvironmentModel(self.rates * factor, self.initial_law)


@dataclass(frozen=True, eq=False)
class RiskModel:
    """m business lines driven by one environment chain.

    Attributes:
        arrival_rates: ``lambda[i, j]``, shape (m, I).
        claims: ``claims[i][j]`` is the claim law of line i in state j.
        premiums: ``r[i]``, shape (m,).
        environment: the shared chain J.
    """

    arrival_rates: FloatArray
    claims: tuple[tuple[ClaimDistribution, ...], ...]
    premiums: FloatArray
    environment: EnvironmentModel

    def __post_init__(self) -> None:
        object.__setattr__(self, "arrival_rates", _frozen_array(self.arrival_rates, 2))
        object.__setattr__(self, "premiums", _frozen_array(self.premiums, 1))
        object.__setattr__(self, "claims", tuple(tuple(row) for row in self.claims))

    @property
    def dimension(self) -> int:
        return int(self.premiums.shape[0])

    @property
    def n_states(self) -> int:
        return self.environment.n_states

    @cached_property
    def claim_means(self) -> FloatArray:
        return _frozen_array([[claim_moments(d)[0] for d in row] for row in self.claims], 2)

    @cached_property
    def claim_variances(self) -> FloatArray:
        return _frozen_array([[claim_moments(d)[1] for d in row] for row in self.claims], 2)

    def has_state_independent_exponential_claims(self, component: int) -> bool:
        """True when line ``component`` has exponential claims with one mean in every state."""
        row = self.claims[component]
        return all(d.is_exponential for d in row) and len({d.mean for d in row}) == 1

    def scaled(self, n: float, alpha: float = 1.0) -> RiskModel:
        """Arrival rates times ``n``, environment rates times ``n**alpha``."""
        return RiskModel(
            arrival_rates=self.arrival_rates * n,
            claims=self.claims,
            premiums=self.premiums,
            environment=self.environment.scaled(n**alpha),
        )


# ============================================================================
# Queries
# ============================================================================


class ModeKind(enum.Enum):
    ALL = "all"
    ANY = "any"
    SUBSET = "subset"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class RuinMode:
    """Which ruin event is measured.

    ALL: every line ruined on [0, T] (not necessarily together).
    ANY: at least one line ruined.
    SUBSET: every line in ``indices`` ruined.
    MARGINAL: line ``indices[0]`` ruined.
    """

    kind: ModeKind
    indices: tuple[int, ...] = ()

    @classmethod
    def all_components(cls) -> RuinMode:
        return cls(ModeKind.ALL)

    @classmethod
    def any_component(cls) -> RuinMode:
        return cls(ModeKind.ANY)

    @classmethod
    def subset(cls, indices: Sequence[int]) -> RuinMode:
        idx = tuple(sorted({int(i) for i in indices}))
        if not idx:
            raise ModelError("subset mode needs at least one component")
        return cls(ModeKind.SUBSET, idx)

    @classmethod
    def marginal(cls, index: int) -> RuinMode:
        return cls(ModeKind.MARGINAL, (int(index),))

    @classmethod
    def parse(cls, text: str) -> RuinMode:
        """Parse ``all``, ``any``, ``marginal:i`` or ``subset:i,j`` (1-based)."""
        head, _, tail = text.strip().lower().partition(":")
        try:
            if head == "all" and not tail:
                return cls.all_components()
            if head == "any" and not tail:
                return cls.any_component()
            if head == "marginal":
                return cls.marginal(int(tail) - 1)
            if head == "subset":
                return cls.subset([int(part) - 1 for part in tail.split(",")])
        except ValueError as exc:
            raise ModelError(f"bad component index in mode {text!r}") from exc
        raise ModelError(f"unknown ruin mode {text!r}")

    def label(self) -> str:
        if self.kind is ModeKind.MARGINAL:
            return f"marginal:{self.indices[0] + 1}"
        if self.kind is ModeKind.SUBSET:
            return "subset:" + ",".join(str(i + 1) for i in self.indices)
        return self.kind.value

    def members(self, dimension: int) -> tuple[int, ...]:
        """Lines whose ruin the event is built from."""
        if self.kind in (ModeKind.ALL, ModeKind.ANY):
            return tuple(range(dimension))
        return self.indices

    def check(self, dimension: int) -> None:
        for i in self.indices:
            if not 0 <= i < dimension:
                raise ModelError(f"mode {self.label()} refers to line {i + 1}, model has {dimension}")

    def hits(self, flags: BoolArray) -> BoolArray:
        """Event indicator per path from a (paths, m) matrix of ruin flags."""
        cols = flags[:, list(self.members(flags.shape[1]))]
        if self.kind is ModeKind.ANY:
            return np.asarray(cols.any(axis=1))
        return np.asarray(cols.all(axis=1))

    def combine(self, ruin_probs: Sequence[float]) -> float:
        """Event probability from per-line ruin probabilities of independent lines."""
        members = self.members(len(ruin_probs))
        if self.kind is ModeKind.ANY:
            return 1.0 - math.prod(1.0 - ruin_probs[i] for i in members)
        return math.prod(ruin_probs[i] for i in members)


@dataclass(frozen=True, eq=False)
class RuinQuery:
    """Initial reserves, horizon, initial environment and ruin mode.

    ``initial_state`` of ``None`` draws J(0) from the environment's initial law.
    """

    reserves: FloatArray
    horizon: float
    initial_state: int | None = 0
    mode: RuinMode = field(default_factory=RuinMode.all_components)

    def __post_init__(self) -> None:
        object.__setattr__(self, "reserves", _frozen_array(self.reserves, 1))
        if np.any(self.reserves < 0) or not np.all(np.isfinite(self.reserves)):
            raise ModelError(f"initial reserves must be finite and >= 0, got {self.reserves.tolist()}")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ModelError(f"horizon must be finite and > 0, got {self.horizon}")

    def check(self, model: RiskModel) -> None:
        """Raise if the query does not fit ``model``."""
        if self.reserves.shape != (model.dimension,):
            raise ModelError(f"{self.reserves.shape[0]} reserves given for {model.dimension} lines")
        if self.initial_state is not None and not 0 <= self.initial_state < model.n_states:
            raise ModelError(f"initial state {self.initial_state + 1} outside 1..{model.n_states}")
        self.mode.check(model.dimension)

    def with_horizon(self, horizon: float) -> RuinQuery:
        return RuinQuery(self.reserves, horizon, self.initial_state, self.mode)

    def with_reserves(self, reserves: Sequence[float] | FloatArray) -> RuinQuery:
        return RuinQuery(np.asarray(reserves, dtype=np.float64), self.horizon, self.initial_state, self.mode)

    def with_mode(self, mode: RuinMode) -> RuinQuery:
        return RuinQuery(self.reserves, self.horizon, self.initial_state, mode)


# ============================================================================
# Validation
# ============================================================================


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


def _is_irreducible(rates: FloatArray) -> bool:
    if rates.shape[0] == 1:
        return True
    adjacency = (rates > 0).astype(np.int8)
    np.fill_diagonal(adjacency, 0)
    n_components, _ = connected_components(csr_matrix(adjacency), directed=True, connection="strong")
    return int(n_components) == 1


def validate(model: RiskModel) -> list[Violation]:
    """Every invariant violation of ``model``; an empty list means valid."""
    violations: list[Violation] = []
    env = model.environment
    q = env.rates
    n_states = q.shape[0]

    if q.ndim != 2 or q.shape != (n_states, n_states) or n_states < 1:
        return [Violation("shape", f"rate matrix must be square with I >= 1, got shape {q.shape}")]
    if not np.all(np.isfinite(q)):
        violations.append(Violation("non-finite", "rate matrix has non-finite entries"))
        return violations

    off = q[~np.eye(n_states, dtype=bool)]
    if np.any(off < 0):
        violations.append(Violation("negative-offdiagonal", "off-diagonal rates must be >= 0"))
    row_sums = q.sum(axis=1)
    bad_rows = np.flatnonzero(np.abs(row_sums) > ROW_SUM_TOLERANCE)
    if bad_rows.size:
        rows = ", ".join(f"{k + 1}: {row_sums[k]:g}" for k in bad_rows)
        violations.append(Violation("row-sum", f"rate-matrix rows must sum to 0 (row {rows})"))
    elif not np.any(off < 0) and not _is_irreducible(q):
        violations.append(Violation("reducible", "environment chain is not irreducible"))

    p = env.initial_law
    if p.shape != (n_states,):
        violations.append(Violation("shape", f"initial law has length {p.shape[0]}, expected {n_states}"))
    elif np.any(p < 0) or abs(p.sum() - 1.0) > LAW_TOLERANCE:
        violations.append(Violation("initial-law", "initial law must be non-negative and sum to 1"))

    m = model.premiums.shape[0]
    lam = model.arrival_rates
    if m < 1:
        violations.append(Violation("shape", "model needs at least one line"))
        return violations
    if lam.shape != (m, n_states):
        violations.append(Violation("shape", f"arrival rates have shape {lam.shape}, expected ({m}, {n_states})"))
    else:
        if not np.all(np.isfinite(lam)):
            violations.append(Violation("non-finite", "arrival rates must be finite"))
        if np.any(lam < 0):
            cells = ", ".join(f"({i + 1},{j + 1})" for i, j in np.argwhere(lam < 0))
            violations.append(Violation("negative-rate", f"arrival rates must be >= 0 at {cells}"))
        for i in np.flatnonzero(~np.any(lam > 0, axis=1)):
            violations.append(Violation("no-arrivals", f"line {i + 1} has no positive arrival rate"))
    if len(model.claims) != m or any(len(row) != n_states for row in model.claims):
        violations.append(Violation("shape", f"claim table must be {m} x {n_states}"))
    if np.any(model.premiums < 0) or not np.all(np.isfinite(model.premiums)):
        violations.append(Violation("negative-premium", "premium rates must be finite and >= 0"))
    return violations
