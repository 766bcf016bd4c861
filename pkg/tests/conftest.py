import math

import numpy as np
import pytest

from tspl.operators import FlowField, ModelParams
from tspl.spectral import TorusGrid


def paper_u0(grid):
    X, Y = grid.coords
    return 1 + 0.5 * np.sin(X) + np.exp(0.7 * np.sin(Y))


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(64)


@pytest.fixture(scope="session")
def paper64(grid64):
    return ModelParams(1.0, FlowField.shear(grid64))


@pytest.fixture(scope="session")
def paper32():
    g = TorusGrid(32)
    return ModelParams(1.0, FlowField.shear(g))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), math.ulp(1.0)))


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number, passed: bool, detail: str) -> bool:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
