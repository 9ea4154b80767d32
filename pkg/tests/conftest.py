import collections
import pathlib
import time

import numpy as np
import pytest

from centroplan import load_scenario
from centroplan.optimizer import assemble, extract_plan, objective_grid, solve
from centroplan.seeding import iterated_plan, seed_references

SCENARIO_DIR = pathlib.Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture(scope="session")
def standing_scenario():
    return load_scenario(SCENARIO_DIR / "standing.yaml")


@pytest.fixture(scope="session")
def benchmark_scenario():
    return load_scenario(SCENARIO_DIR / "benchmark.yaml")


@pytest.fixture(scope="session")
def standing_solution(standing_scenario):
    """Solved standing problem: (plan, diagnostics, problem)."""
    refs = seed_references(standing_scenario)
    problem = assemble(standing_scenario, refs)
    x, diag = solve(problem)
    return extract_plan(x, standing_scenario), diag, problem


@pytest.fixture(scope="session")
def standing_plan(standing_solution):
    return standing_solution[0]


BenchmarkResult = collections.namedtuple("BenchmarkResult", "plan report elapsed")


@pytest.fixture(scope="session")
def benchmark_result(benchmark_scenario):
    """Two-pass seed iteration on the benchmark: (plan, report, wall seconds)."""
    t0 = time.perf_counter()
    plan, report = iterated_plan(benchmark_scenario)
    return BenchmarkResult(plan, report, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def benchmark_plan(benchmark_result):
    return benchmark_result[0]


@pytest.fixture(scope="session")
def benchmark_grid(benchmark_scenario):
    return objective_grid(benchmark_scenario)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
