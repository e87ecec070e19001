import numpy as np
import pytest

from peeroc.coefficients import BUILTIN_NAMES, load_triplet
from peeroc.problems import get_problem


@pytest.fixture(scope="session")
def triplets():
    return {name: load_triplet(name) for name in BUILTIN_NAMES}


@pytest.fixture(scope="session")
def wave_problem():
    return get_problem("wave")


@pytest.fixture(scope="session")
def rayleigh_problem():
    return get_problem("rayleigh")


@pytest.fixture(scope="session")
def motion_problem():
    return get_problem("motion")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one summary line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
