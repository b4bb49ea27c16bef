"""
ruinlab command line.

Usage:
    ruinlab estimate --example example1 --paths 100000
    ruinlab approx-diffusion --model base.toml --T 50
    ruinlab approx-switch --model base.toml --tau 10 --line 1 --target 2
    ruinlab compare --example example1 --paths 100000
    ruinlab reproduce example2 --output fig3.csv
    ruinlab fclt-check --n 64 --paths 100000
    ruinlab run --config experiment.toml

Exit codes: 0 success, 1 failed check, 2 bad input, 3 estimator failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from .config import METHODS, McSettings, ModelFile, effective_threads, load_example, load_model_file, parse_experiment
from .diffusion import diffusion_spec, multivariate_ruin_diffusion, univariate_bm_ruin
from .errors import ConfigError, EstimationError, ModelError, RuinlabError
from .model import RiskModel, RuinMode, RuinQuery
from .numerics import QuadratureConfig
from .simulate import MonteCarloEstimate, estimate_ruin, estimate_ruin_curve, fclt_check
from .switch import SwitchScenario, chi, scenario_ruin

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["T", "mc", "mc_ci_low", "mc_ci_high", "diffusion", "single_switch", "independence", "state", "mode"]
CSV_FLOAT_FORMAT = "%.8f"


# ============================================================================
# Experiments
# ============================================================================


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """One experiment: a model file, a horizon grid and the methods to run."""

    model_file: ModelFile
    horizons: tuple[float, ...]
    methods: tuple[str, ...] = METHODS
    mc: McSettings = field(default_factory=McSettings)
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    output: Path | None = None

    def __post_init__(self) -> None:
        # re-validates grid and method names
        parse_experiment({"horizons": list(self.horizons), "methods": list(self.methods)})

    @property
    def model(self) -> RiskModel:
        return self.model_file.model

    @property
    def query(self) -> RuinQuery:
        return self.model_file.query


@dataclass(frozen=True)
class ResultRow:
    horizon: float
    state: str
    mode: str
    mc: float | None = None
    mc_ci_low: float | None = None
    mc_ci_high: float | None = None
    diffusion: float | None = None
    single_switch: float | None = None
    independence: float | None = None

    def record(self) -> dict[str, float | str | None]:
        return {
            "T": self.horizon,
            "mc": self.mc,
            "mc_ci_low": self.mc_ci_low,
            "mc_ci_high": self.mc_ci_high,
            "diffusion": self.diffusion,
            "single_switch": self.single_switch,
            "independence": self.independence,
            "state": self.state,
            "mode": self.mode,
        }

    def method_value(self, method: str) -> float | None:
        return {
            "mc": self.mc,
            "diffusion": self.diffusion,
            "single-switch": self.single_switch,
            "independence": self.independence,
        }[method]


def independence_probability(model: RiskModel, query: RuinQuery) -> float:
    """Combine univariate diffusion ruin probabilities as if the lines were independent."""
    spec = diffusion_spec(model)
    ruin = [
        univariate_bm_ruin(float(query.reserves[i]), float(spec.drift[i]), float(spec.sigma[i, i]), query.horizon)
        for i in range(model.dimension)
    ]
    return query.mode.combine(ruin)


def _attempt(method: str, horizon: float, compute: Callable[[], float]) -> float:
    try:
        return compute()
    except RuinlabError as exc:
        raise EstimationError(method, horizon, exc) from exc


def _state_label(query: RuinQuery) -> str:
    return "law" if query.initial_state is None else str(query.initial_state + 1)


def compute_rows(config: ExperimentConfig) -> list[ResultRow]:
    model, query = config.model, config.query
    methods = set(config.methods)
    curve: list[dict[RuinMode, MonteCarloEstimate]] | None = None
    if "mc" in methods:
        mc = config.mc
        logger.info("simulating %d paths up to T=%g", mc.paths, config.horizons[-1])
        curve = estimate_ruin_curve(
            model, query, config.horizons, mc.paths, mc.seed, mc.threads, [query.mode], mc.confidence
        )

    rows: list[ResultRow] = []
    tol = config.quadrature.rel_tol
    for n, horizon in enumerate(config.horizons):
        at_t = query.with_horizon(horizon)
        row = ResultRow(horizon, _state_label(query), query.mode.label())
        if curve is not None:
            est = curve[n][query.mode]
            row = replace(row, mc=est.estimate, mc_ci_low=est.ci_low, mc_ci_high=est.ci_high)
        if "diffusion" in methods:
            value = _attempt(
                "diffusion", horizon, lambda q=at_t: multivariate_ruin_diffusion(model, q, tol=tol).probability
            )
            row = replace(row, diffusion=value)
        if "single-switch" in methods:
            value = _attempt("single-switch", horizon, lambda q=at_t: chi(model, q, config.quadrature))
            row = replace(row, single_switch=value)
        if "independence" in methods:
            value = _attempt("independence", horizon, lambda q=at_t: independence_probability(model, q))
            row = replace(row, independence=value)
        rows.append(row)
    return rows


def write_csv(rows: Sequence[ResultRow], path: Path) -> None:
    frame = pd.DataFrame([row.record() for row in rows], columns=CSV_COLUMNS)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, na_rep="")


def max_deviations(rows: Sequence[ResultRow]) -> dict[str, float]:
    """max |method - mc| over the grid for every method that has values."""
    deviations: dict[str, float] = {}
    for method in ("diffusion", "single-switch", "independence"):
        gaps = [
            abs(value - row.mc)
            for row in rows
            if row.mc is not None and (value := row.method_value(method)) is not None
        ]
        if gaps:
            deviations[method] = max(gaps)
    return deviations


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.6f}"


def print_table(rows: Sequence[ResultRow]) -> None:
    print(f"{'T':>8} {'mc':>10} {'ci_low':>10} {'ci_high':>10} {'diffusion':>10} {'switch':>10} {'indep':>10}")
    for row in rows:
        print(
            f"{row.horizon:>8g} {_fmt(row.mc):>10} {_fmt(row.mc_ci_low):>10} {_fmt(row.mc_ci_high):>10} "
            f"{_fmt(row.diffusion):>10} {_fmt(row.single_switch):>10} {_fmt(row.independence):>10}"
        )


def run(config: ExperimentConfig) -> list[ResultRow]:
    """Evaluate every method on the horizon grid, write the CSV and print a summary."""
    rows = compute_rows(config)
    if config.output is not None:
        write_csv(rows, config.output)

    print("=" * 72)
    print(f"ruinlab experiment: {config.model_file.source}")
    print(f"state {_state_label(config.query)} | mode {config.query.mode.label()} | methods {', '.join(config.methods)}")
    print("=" * 72)
    print_table(rows)
    for method, gap in max_deviations(rows).items():
        print(f"max |{method} - mc| = {gap:.6f}")
    if config.output is not None:
        print(f"CSV saved: {config.output}")
    return rows


# ============================================================================
# Argument handling
# ============================================================================


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected an integer >= 0, got {text}")
    return value


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def _add_source(parser: argparse.ArgumentParser, required: bool = True) -> None:
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument("--model", type=Path, help="TOML model file")
    group.add_argument("--example", choices=("example1", "example2", "example3"), help="bundled model")


def _add_query(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--T", dest="horizon", type=float, help="horizon (overrides the file)")
    parser.add_argument("--reserves", type=float, nargs="+", help="initial reserves, one per line")
    parser.add_argument("--state", type=int, help="initial environment state (1-based)")
    parser.add_argument("--mode", help="all | any | marginal:i | subset:i,j")


def _add_mc(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--paths", type=_positive_int, help="Monte Carlo paths")
    parser.add_argument("--seed", type=_non_negative_int, help="Monte Carlo seed")
    parser.add_argument("--threads", type=_non_negative_int, help="worker processes (0 = one per CPU)")
    parser.add_argument("--confidence", type=_probability, help="confidence level of the interval")


def _load(args: argparse.Namespace) -> ModelFile:
    file = load_example(args.example) if getattr(args, "example", None) else load_model_file(args.model)
    query = file.query
    try:
        if getattr(args, "horizon", None) is not None:
            query = query.with_horizon(args.horizon)
        if getattr(args, "reserves", None):
            query = query.with_reserves(args.reserves)
        if getattr(args, "state", None) is not None:
            query = RuinQuery(query.reserves, query.horizon, args.state - 1, query.mode)
        if getattr(args, "mode", None):
            query = query.with_mode(RuinMode.parse(args.mode))
        query.check(file.model)
    except ModelError as exc:
        raise ConfigError(f"command line: {exc}") from exc
    return replace(file, query=query)


def _mc_settings(args: argparse.Namespace, file: ModelFile) -> McSettings:
    base = file.mc
    return McSettings(
        paths=args.paths if args.paths is not None else base.paths,
        seed=args.seed if args.seed is not None else base.seed,
        confidence=args.confidence if args.confidence is not None else base.confidence,
        threads=effective_threads(args.threads, base.threads),
    )


def _experiment(args: argparse.Namespace, file: ModelFile, default_grid: bool) -> ExperimentConfig:
    """Experiment from the file's [experiment] section, or the query horizon alone."""
    section = file.experiment
    if getattr(args, "horizon", None) is not None or (section is None and default_grid):
        horizons: tuple[float, ...] = (file.query.horizon,)
        methods = section.methods if section else METHODS
    elif section is None:
        raise ConfigError(f"{file.source}: no [experiment] section")
    else:
        horizons, methods = section.horizons, section.methods
    output = getattr(args, "output", None) or (section.output if section else None)
    return ExperimentConfig(file, horizons, methods, _mc_settings(args, file), file.quadrature, output)


# ============================================================================
# Subcommands
# ============================================================================


def cmd_estimate(args: argparse.Namespace) -> int:
    file = _load(args)
    model, query = file.model, file.query
    mc = _mc_settings(args, file)
    modes = [query.mode]
    if args.breakdown:
        modes += [RuinMode.all_components(), RuinMode.any_component()]
        modes += [RuinMode.marginal(i) for i in range(model.dimension)]
    results = estimate_ruin(model, query, mc.paths, mc.seed, mc.threads, modes, mc.confidence)
    print(f"Monte Carlo, T={query.horizon:g}, state {_state_label(query)}, {mc.confidence:.0%} interval")
    for estimate in results.values():
        print(f"  {estimate}")
    return 0


def cmd_approx_diffusion(args: argparse.Namespace) -> int:
    file = _load(args)
    query = file.query
    result = _attempt(
        "diffusion",
        query.horizon,
        lambda: multivariate_ruin_diffusion(file.model, query, tol=file.quadrature.rel_tol).probability,
    )
    spec = diffusion_spec(file.model)
    print(f"diffusion, T={query.horizon:g}, mode {query.mode.label()}: {result:.6f}")
    print(f"drift: {np.array2string(spec.drift, precision=6)}")
    print(f"Sigma {spec.regime}:")
    print(np.array2string(spec.sigma, precision=6))
    if file.model.dimension >= 2:
        print(f"correlation(1, 2): {spec.correlation(0, 1):.4f}")
    if len(query.mode.members(file.model.dimension)) > 2:
        print("note: approximate-combination (pairwise survivals combined beyond two lines)")
    return 0


def cmd_approx_switch(args: argparse.Namespace) -> int:
    file = _load(args)
    query = file.query
    if args.tau is not None:
        start = query.initial_state if query.initial_state is not None else 0
        if not (1 <= args.line <= file.model.dimension and 1 <= args.target <= file.model.n_states):
            raise ConfigError(
                f"command line: --line must be in 1..{file.model.dimension}, --target in 1..{file.model.n_states}"
            )
        try:
            scenario = SwitchScenario(args.line - 1, start, args.target - 1, args.tau, query.horizon)
        except ModelError as exc:
            raise ConfigError(f"command line: {exc}") from exc
        u = float(query.reserves[scenario.component])
        value = _attempt("single-switch", query.horizon, lambda: scenario_ruin(file.model, scenario, u, file.quadrature))
        print(
            f"line {args.line}, {start + 1} -> {args.target} at tau={args.tau:g}, T={query.horizon:g}, "
            f"u={u:g}: {value:.6f}"
        )
        return 0
    value = _attempt("single-switch", query.horizon, lambda: chi(file.model, query, file.quadrature))
    print(f"single-switch, T={query.horizon:g}, state {_state_label(query)}, mode {query.mode.label()}: {value:.6f}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    file = _load(args)
    config = _experiment(args, file, default_grid=True)
    config = replace(config, methods=METHODS)
    run(config)
    return 0


def cmd_reproduce(args: argparse.Namespace) -> int:
    file = load_example(args.name)
    config = _experiment(args, file, default_grid=False)
    run(config)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    file = load_model_file(args.config)
    config = _experiment(args, file, default_grid=False)
    run(config)
    return 0


def cmd_fclt_check(args: argparse.Namespace) -> int:
    file = _load(args) if (args.model or args.example) else load_example("example1")
    threads = effective_threads(args.threads, file.mc.threads)
    report = fclt_check(file.model, args.n, args.alpha, args.paths, args.seed, threads)
    print(f"scaled claims covariance at n={args.n:g}, regime {report.regime}, {report.n_paths} paths")
    print("sample:")
    print(np.array2string(report.sample, precision=5))
    print("limit:")
    print(np.array2string(report.analytic, precision=5))
    for i, err in enumerate(report.relative_errors, start=1):
        print(f"  variance {i}: relative error {err:.2%}")
    for gap in report.correlation_gaps:
        print(f"  correlation gap {gap:.4f}")
    passed = report.passed()
    print("✅ PASS" if passed else "❌ FAIL")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ruinlab", description="Finite-time multivariate ruin probabilities.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="exact Monte Carlo estimate")
    _add_source(p)
    _add_query(p)
    _add_mc(p)
    p.add_argument("--breakdown", action="store_true", help="also report all/any/marginal modes")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("approx-diffusion", help="diffusion approximation")
    _add_source(p)
    _add_query(p)
    p.set_defaults(handler=cmd_approx_diffusion)

    p = sub.add_parser("approx-switch", help="single-switch approximation")
    _add_source(p)
    _add_query(p)
    p.add_argument("--tau", type=float, help="evaluate one line under a fixed switch time instead")
    p.add_argument("--line", type=int, default=1, help="line for --tau (1-based)")
    p.add_argument("--target", type=int, default=2, help="state after the switch for --tau (1-based)")
    p.set_defaults(handler=cmd_approx_switch)

    p = sub.add_parser("compare", help="all methods against Monte Carlo")
    _add_source(p)
    _add_query(p)
    _add_mc(p)
    p.add_argument("--output", type=Path, help="CSV output path")
    p.set_defaults(handler=cmd_compare)

    p = sub.add_parser("reproduce", help="run a bundled example experiment")
    p.add_argument("name", choices=("example1", "example2", "example3"))
    _add_mc(p)
    p.add_argument("--output", type=Path, help="CSV output path")
    p.set_defaults(handler=cmd_reproduce)

    p = sub.add_parser("fclt-check", help="scaled-process covariance against the limit")
    _add_source(p, required=False)
    p.add_argument("--n", type=float, default=64.0, help="scaling factor")
    p.add_argument("--alpha", type=float, default=1.0, help="environment speed-up exponent")
    p.add_argument("--paths", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=_non_negative_int, default=0)
    p.add_argument("--threads", type=_non_negative_int)
    p.set_defaults(handler=cmd_fclt_check)

    p = sub.add_parser("run", help="run the [experiment] section of a model file")
    p.add_argument("--config", type=Path, required=True)
    _add_mc(p)
    p.add_argument("--output", type=Path, help="CSV output path")
    p.set_defaults(handler=cmd_run)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return int(args.handler(args))
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuinlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
