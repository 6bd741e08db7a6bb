import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wgqubit import BpmConfig, SlabGeometry, TransverseGrid, solve_te_modes

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

N_CORE, N_CLAD, WIDTH, LAM = 1.57, 1.55, 3.0, 1.064

ACCEPTANCE_LINES: list[str] = []
BUILD_SECONDS: dict[str, float] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def slab():
    return SlabGeometry.symmetric(N_CORE, N_CLAD, WIDTH, LAM)


@pytest.fixture(scope="session")
def grid():
    return TransverseGrid(-15.0, 15.0, 2048)


@pytest.fixture(scope="session")
def modes(slab, grid):
    return solve_te_modes(slab, grid)


@pytest.fixture(scope="session")
def not_gate():
    """Calibrated NOT gate at the default resolution (shared by several tests)."""
    from wgqubit.scenarios import run_not_gate
    t0 = time.perf_counter()
    res = run_not_gate(BpmConfig())
    BUILD_SECONDS["not_gate"] = time.perf_counter() - t0
    return res


@pytest.fixture(scope="session")
def cnot():
    from wgqubit.scenarios import run_cnot
    t0 = time.perf_counter()
    res = run_cnot(BpmConfig(snapshot_stride=100))
    BUILD_SECONDS["cnot"] = time.perf_counter() - t0
    return res


def gaussian(x, center=0.0, width=1.0):
    return np.exp(-((x - center) ** 2) / (2 * width**2))
