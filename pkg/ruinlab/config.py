"""
TOML model files.

Indices in files are 1-based; everything returned here is 0-based.
"""

from __future__ import annotations

import logging
import os
import tomllib
from collections.abc import Mapping
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, ModelError, RuinlabError
from .markov import stationary_distribution
from .model import ClaimDistribution, EnvironmentModel, FloatArray, RiskModel, RuinMode, RuinQuery, validate
from .numerics import QuadratureConfig
from .simulate import THREADS_ENV

logger = logging.getLogger(__name__)

METHODS = ("mc", "diffusion", "single-switch", "independence")
EXAMPLES = ("example1", "example2", "example3")


@dataclass(frozen=True)
class McSettings:
    paths: int = 1_000_000
    seed: int = 0
    confidence: float = 0.95
    threads: int | None = None


@dataclass(frozen=True)
class ExperimentSection:
    horizons: tuple[float, ...]
    methods: tuple[str, ...] = METHODS
    output: Path | None = None


@dataclass(frozen=True, eq=False)
class ModelFile:
    """Everything one model file describes."""

    source: str
    model: RiskModel
    query: RuinQuery
    mc: McSettings = field(default_factory=McSettings)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    experiment: ExperimentSection | None = None


# ============================================================================
# Field helpers
# ============================================================================


def _section(data: Mapping[str, Any], name: str, required: bool = True) -> Mapping[str, Any]:
    value = data.get(name)
    if value is None:
        if required:
            raise ConfigError(f"missing [{name}] section")
        return {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _require(table: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in table:
        raise ConfigError(f"{where}: missing key '{key}'")
    return table[key]


def _matrix(value: Any, where: str) -> FloatArray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected a numeric matrix") from exc
    if arr.ndim != 2:
        raise ConfigError(f"{where}: expected a list of rows, got {arr.ndim} dimension(s)")
    return arr


def _vector(value: Any, where: str) -> FloatArray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: expected a list of numbers") from exc
    if arr.ndim != 1:
        raise ConfigError(f"{where}: expected a flat list")
    return arr


def _index(value: Any, upper: int, where: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= upper:
        raise ConfigError(f"{where}: expected an integer in 1..{upper}, got {value!r}")
    return value - 1


def parse_claim(table: Mapping[str, Any], where: str) -> ClaimDistribution:
    kind = _require(table, "kind", where)
    try:
        if kind == "exponential":
            return ClaimDistribution.exponential(float(_require(table, "mean", where)))
        if kind == "gamma":
            return ClaimDistribution.gamma(float(_require(table, "shape", where)), float(_require(table, "scale", where)))
        if kind == "deterministic":
            return ClaimDistribution.deterministic(float(_require(table, "value", where)))
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    raise ConfigError(f"{where}: unknown claim kind {kind!r}")


# ============================================================================
# Sections
# ============================================================================


def _claims_table(data: Mapping[str, Any], m: int, n_states: int) -> tuple[tuple[ClaimDistribution, ...], ...]:
    section = _section(data, "claims")
    default = parse_claim(_require(section, "default", "[claims]"), "[claims].default")
    table = [[default] * n_states for _ in range(m)]
    for n, override in enumerate(section.get("override", []), start=1):
        where = f"[[claims.override]] #{n}"
        i = _index(_require(override, "component", where), m, where)
        j = _index(_require(override, "state", where), n_states, where)
        table[i][j] = parse_claim(override, where)
    return tuple(tuple(row) for row in table)


def _mc_settings(data: Mapping[str, Any]) -> McSettings:
    section = _section(data, "mc", required=False)
    defaults = McSettings()
    try:
        settings = McSettings(
            paths=int(section.get("paths", defaults.paths)),
            seed=int(section.get("seed", defaults.seed)),
            confidence=float(section.get("confidence", defaults.confidence)),
            threads=int(section["threads"]) if "threads" in section else None,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[mc]: {exc}") from exc
    if settings.paths < 1 or settings.seed < 0 or not 0 < settings.confidence < 1:
        raise ConfigError("[mc]: need paths >= 1, seed >= 0 and confidence in (0, 1)")
    if settings.threads is not None and settings.threads < 0:
        raise ConfigError("[mc]: threads must be >= 0")
    return settings


def _quadrature(data: Mapping[str, Any]) -> QuadratureConfig:
    section = _section(data, "quadrature", required=False)
    defaults = QuadratureConfig()
    try:
        return QuadratureConfig(
            rel_tol=float(section.get("rel_tol", defaults.rel_tol)),
            abs_tol=float(section.get("abs_tol", defaults.abs_tol)),
            max_subdivisions=int(section.get("max_subdivisions", defaults.max_subdivisions)),
        )
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"[quadrature]: {exc}") from exc


def parse_experiment(section: Mapping[str, Any], base: Path | None = None) -> ExperimentSection:
    horizons = tuple(float(t) for t in _vector(_require(section, "horizons", "[experiment]"), "[experiment].horizons"))
    if not horizons or horizons[0] <= 0 or any(b <= a for a, b in zip(horizons, horizons[1:], strict=False)):
        raise ConfigError("[experiment].horizons must be positive and strictly increasing")
    methods = tuple(section.get("methods", METHODS))
    unknown = sorted(set(methods) - set(METHODS))
    if not methods or unknown:
        raise ConfigError(f"[experiment].methods must be a non-empty subset of {METHODS}, got {list(methods)}")
    output = section.get("output")
    path = Path(output) if output is not None else None
    if path is not None and base is not None and not path.is_absolute():
        path = base / path
    return ExperimentSection(horizons, methods, path)


def parse_model_file(data: Mapping[str, Any], source: str = "<memory>", base: Path | None = None) -> ModelFile:
    """Build a validated ``ModelFile`` from parsed TOML."""
    env_section = _section(data, "environment")
    rates = _matrix(_require(env_section, "rates", "[environment]"), "[environment].rates")
    n_states = rates.shape[0]

    comp = _section(data, "components")
    premiums = _vector(_require(comp, "premiums", "[components]"), "[components].premiums")
    arrival = _matrix(_require(comp, "arrival_rates", "[components]"), "[components].arrival_rates")
    m = premiums.shape[0]
    if arrival.shape != (m, n_states):
        raise ConfigError(f"[components].arrival_rates must be {m} x {n_states}, got {arrival.shape}")
    claims = _claims_table(data, m, n_states)

    query_section = _section(data, "query")
    reserves = _vector(_require(query_section, "reserves", "[query]"), "[query].reserves")
    random_start = query_section.get("initial") == "law"
    if "initial" in query_section and not random_start:
        raise ConfigError(f"[query].initial must be \"law\", got {query_section['initial']!r}")
    initial_state = None if random_start else _index(query_section.get("initial_state", 1), n_states, "[query]")

    if "initial_law" in env_section:
        law = _vector(env_section["initial_law"], "[environment].initial_law")
    else:
        law = np.zeros(n_states)
        law[initial_state or 0] = 1.0

    model = RiskModel(arrival, claims, premiums, EnvironmentModel(rates, law))
    violations = validate(model)
    if violations:
        for extra in violations[1:]:
            logger.debug("%s: also %s", source, extra)
        raise ConfigError(f"{source}: {violations[0]}")
    if random_start and "initial_law" not in env_section:
        stationary = stationary_distribution(model.environment)
        model = RiskModel(arrival, claims, premiums, EnvironmentModel(rates, stationary.pi))

    try:
        horizon = float(_require(query_section, "horizon", "[query]"))
        mode = RuinMode.parse(str(query_section.get("mode", "all")))
        query = RuinQuery(reserves, horizon, initial_state, mode)
        query.check(model)
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: [query]: {exc}") from exc

    experiment_section = _section(data, "experiment", required=False)
    return ModelFile(
        source=source,
        model=model,
        query=query,
        mc=_mc_settings(data),
        quadrature=_quadrature(data),
        experiment=parse_experiment(experiment_section, base) if experiment_section else None,
    )


# ============================================================================
# Entry points
# ============================================================================


def load_model_file(path: str | os.PathLike[str]) -> ModelFile:
    file = Path(path)
    try:
        with file.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{file}: cannot read ({exc.strerror})") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{file}: {exc}") from exc
    try:
        return parse_model_file(data, str(file), file.parent)
    except ConfigError:
        raise
    except RuinlabError as exc:
        raise ConfigError(f"{file}: {exc}") from exc


def load_example(name: str) -> ModelFile:
    """One of the bundled example model files."""
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}; choose from {', '.join(EXAMPLES)}")
    resource = resources.files("ruinlab") / "data" / f"{name}.toml"
    data = tomllib.loads(resource.read_text(encoding="utf-8"))
    return parse_model_file(data, f"{name}.toml")


def effective_threads(flag: int | None, file_value: int | None) -> int | None:
    """CLI flag, then RUINLAB_THREADS, then the file; ``None`` leaves the choice to ``simulate``."""
    if flag is not None:
        return flag
    if os.environ.get(THREADS_ENV):
        return None
    return file_value
