import sys

import numpy as np
import pytest

from ernwave.geometry import BackgroundERN
from ernwave.modes import build_angular_grid


@pytest.fixture
def bg():
    return BackgroundERN(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def ang0():
    return build_angular_grid(0)


@pytest.fixture
def ang4():
    return build_angular_grid(4)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
