#!/usr/bin/env python3
"""
ruinlab Monte Carlo Benchmark Suite

Measures path throughput of the exact simulator on the bundled examples for
several worker counts, checks that every worker count gives the same hit
counts, and writes docs/BENCHMARK.md.

Usage:
    python3 scripts/benchmark_suite.py             # Full benchmark
    python3 scripts/benchmark_suite.py --quick     # Quick mode (example1 only, fewer paths)
"""

import sys
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import psutil

from ruinlab.config import load_example
from ruinlab.simulate import estimate_ruin

# ============================================================================
# Configuration
# ============================================================================

SCRIPT_DIR = Path(__file__).parent.absolute()
PROJECT_ROOT = SCRIPT_DIR.parent
REPORT_DIR = PROJECT_ROOT / "docs"

DATASETS = {
    "example1": {"tier": "quick"},
    "example2": {"tier": "full"},
    "example3": {"tier": "full"},
}


@dataclass
class BenchmarkResult:
    """One simulator run."""

    name: str
    workers: int
    paths: int
    duration_sec: float
    hits: int

    @property
    def paths_per_sec(self) -> float:
        return self.paths / self.duration_sec if self.duration_sec > 0 else 0


@dataclass
class BenchmarkSuite:
    results: list[BenchmarkResult] = field(default_factory=list)
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())

    def add(self, result: BenchmarkResult) -> None:
        self.results.append(result)

    @property
    def deterministic(self) -> bool:
        return len({r.hits for r in self.results}) <= 1

    def speedup(self, result: BenchmarkResult) -> float:
        serial = next((r for r in self.results if r.workers == 1), None)
        if serial is None or result.duration_sec <= 0:
            return 0.0
        return serial.duration_sec / result.duration_sec


def worker_counts() -> list[int]:
    cpus = psutil.cpu_count(logical=True) or 1
    return sorted({1, 2, 4, cpus} & set(range(1, cpus + 1)))


# ============================================================================
# Benchmark Functions
# ============================================================================


def run_example_benchmark(name: str, paths: int) -> BenchmarkSuite:
    file = load_example(name)
    suite = BenchmarkSuite()
    for workers in worker_counts():
        start = time.time()
        result = estimate_ruin(file.model, file.query, paths, file.mc.seed, workers)
        duration = time.time() - start
        hits = result[file.query.mode].hits
        suite.add(BenchmarkResult(name, workers, paths, duration, hits))
        print(f"  workers={workers:<3} {paths / duration:>10,.0f} paths/s  hits={hits}")
    return suite


# ============================================================================
# Report
# ============================================================================


def generate_report(suites: dict[str, BenchmarkSuite]) -> str:
    lines = [
        "# ruinlab Monte Carlo Benchmark",
        "",
        f"Generated: {datetime.now().strftime('%Y-%m-%d %H:%M')}",
        f"Logical CPUs: {psutil.cpu_count(logical=True)}",
        "",
        "## Throughput",
        "",
        "| Example | Workers | Paths | Time | Paths/s | Speedup |",
        "|---------|---------|-------|------|---------|---------|",
    ]
    for name, suite in suites.items():
        for r in suite.results:
            lines.append(
                f"| {name} | {r.workers} | {r.paths:,} | {r.duration_sec:.1f}s | "
                f"{r.paths_per_sec:,.0f} | {suite.speedup(r):.2f}x |"
            )

    lines.extend(["", "## Determinism", "", "Hit counts must not depend on the worker count:", ""])
    for name, suite in suites.items():
        status = "identical" if suite.deterministic else "DIFFERENT"
        hits = ", ".join(f"{r.workers}: {r.hits}" for r in suite.results)
        lines.append(f"- **{name}**: {status} ({hits})")
    return "\n".join(lines) + "\n"


# ============================================================================
# Main
# ============================================================================


def main() -> None:
    quick_mode = "--quick" in sys.argv

    print("╔══════════════════════════════════════════════════════════╗")
    print("║              ruinlab Monte Carlo Benchmark               ║")
    print("╚══════════════════════════════════════════════════════════╝")
    print()

    if quick_mode:
        datasets = {k: v for k, v in DATASETS.items() if v["tier"] == "quick"}
        paths = 20_000
        print("Mode: QUICK (example1, 20,000 paths)")
    else:
        datasets = DATASETS
        paths = 200_000
        print("Mode: FULL (all examples, 200,000 paths)")
    print()

    suites: dict[str, BenchmarkSuite] = {}
    for name in datasets:
        print(f"═══ {name.upper()} ═══")
        suites[name] = run_example_benchmark(name, paths)
        print()

    report = generate_report(suites)
    report_path = REPORT_DIR / "BENCHMARK.md"
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(report)
    print(f"Report saved: {report_path}")
    print()
    print(report)

    if not all(suite.deterministic for suite in suites.values()):
        print("❌ worker count changed the estimates")
        sys.exit(1)


if __name__ == "__main__":
    main()
