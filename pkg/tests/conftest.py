import sys

import numpy as np
import pytest

from v3olp.reward import PoolParams


@pytest.fixture
def pool():
    return PoolParams(1.01, 0.003)


@pytest.fixture
def rng():
    return np.random.default_rng(20221231)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    verdicts = getattr(acceptance, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for number in sorted(verdicts):
            terminalreporter.write_line(verdicts[number])
