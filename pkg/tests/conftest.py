from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gma import make_mixture_1d

settings.register_profile(
    "gma",
    max_examples=40,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("gma")

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def two_bump_mixture():
    """The reference 1D mixture: equal weights, means -1 and 1, unit sds."""
    return make_mixture_1d([0.5, 0.5], [-1.0, 1.0], [1.0, 1.0])


@pytest.fixture
def mixture():
    return two_bump_mixture()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
