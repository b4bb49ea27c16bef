"""Shared settings for the slow Monte Carlo checks.

Path counts default to the published experiment sizes; set
RUINLAB_ACCEPTANCE_PATHS to run a lighter pass.
"""

from __future__ import annotations

import os
from dataclasses import replace

import pytest

from ruinlab.cli import ExperimentConfig, ResultRow, compute_rows, max_deviations
from ruinlab.config import load_example

PATHS_ENV = "RUINLAB_ACCEPTANCE_PATHS"
COMPARISON_GRID = (10.0, 20.0, 30.0, 40.0, 50.0)


def acceptance_paths(default: int = 1_000_000) -> int:
    raw = os.environ.get(PATHS_ENV)
    return int(raw) if raw else default


@pytest.fixture(scope="session")
def example_deviations() -> dict[str, dict[str, float]]:
    """max |method - mc| over the comparison grid, per bundled example."""
    cache: dict[str, dict[str, float]] = {}

    def rows(name: str) -> list[ResultRow]:
        file = load_example(name)
        mc = replace(file.mc, paths=acceptance_paths(), threads=0)
        config = ExperimentConfig(file, COMPARISON_GRID, ("mc", "diffusion", "single-switch"), mc, file.quadrature)
        return compute_rows(config)

    for name in ("example1", "example2", "example3"):
        cache[name] = max_deviations(rows(name))
    return cache
