from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from landscape_lab.busemann import build_difference_field
from landscape_lab.environment import gen_environment
from landscape_lab.instability import build_instability_graph

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("repo")

# one line per acceptance criterion, printed at the end of the session
CRITERIA: list[str] = []


def record(line: str) -> None:
    CRITERIA.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)


def semi(seed: int = 1, n_levels: int = 40, mesh: float = 0.01, x_max: float = 20.0):
    return gen_environment({"kind": "SemiDiscrete", "seed": seed, "n_levels": n_levels, "mesh": mesh,
                            "x_min": 0.0, "x_max": x_max})


@pytest.fixture(scope="session")
def small_run():
    """Semi-discrete field, difference field and instability graph at smoke size."""
    env = semi(1)
    df = build_difference_field(env)
    return env, df, build_instability_graph(df)


@pytest.fixture(scope="session")
def small_runs():
    out = []
    for seed in (1, 2, 3):
        env = semi(seed)
        df = build_difference_field(env)
        out.append((env, df, build_instability_graph(df)))
    return out


def integer_increments(rng: np.random.Generator, n_levels: int, width: int, lo: int = -2, hi: int = 2) -> np.ndarray:
    """Small integer increments: sums are exact so ties are genuine."""
    return rng.integers(lo, hi + 1, size=(n_levels, width - 1)).astype(float)
