import sys

import numpy as np
import pytest

from catomo import CatState, NoiseModel

_ACCEPT_LINES: list[str] = []


@pytest.fixture
def cat():
    """The reference state |alpha|^2 = 4.5, alpha real."""
    return CatState(3.0 / np.sqrt(2.0))


@pytest.fixture
def noise():
    """The sub-50% detection efficiency studied throughout."""
    return NoiseModel(0.45)


def report(line: str) -> None:
    """Record an acceptance verdict and echo it past pytest's capture."""
    _ACCEPT_LINES.append(line)
    print(line, file=sys.__stderr__, flush=True)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPT_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPT_LINES:
            terminalreporter.line(line)
