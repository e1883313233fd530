from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def random_stochastic(gen: np.random.Generator, rows: int, cols: int, zeros: float = 0.0) -> np.ndarray:
    W = gen.random((rows, cols))
    if zeros:
        W[gen.random((rows, cols)) < zeros] = 0.0
        W[np.arange(rows), gen.integers(0, cols, rows)] += 0.1
    return W / W.sum(axis=1, keepdims=True)


# acceptance criteria report lines, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter) -> None:
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
