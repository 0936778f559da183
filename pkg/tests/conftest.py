import numpy as np
import pytest
from hypothesis import settings

from rebirthlab import levy_kernels as lk
from rebirthlab.rebirth_kernels import BaseProcess

settings.register_profile("rebirthlab", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("rebirthlab")


@pytest.fixture
def brownian():
    return lk.LevyExponentSpec.brownian()


@pytest.fixture
def case1(brownian):
    return BaseProcess(1, 1.0, levy=brownian)


def brownian_u(beta, x):
    k = np.sqrt(2.0 * beta)
    return np.exp(-k * np.abs(x)) / k


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in mod.LINES:
            terminalreporter.write_line(line)
