import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def within(x, target, se, k=3.0):
    return abs(x - target) <= k * se


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
