import sys

import numpy as np
import pytest
from hypothesis import settings

from pu_tilt import EmConfig, SimSetting, em_fit, generate_pu

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_s1():
    """Setting 1 draw with n=600 (500 labeled)."""
    return generate_pu(SimSetting("S1", n0=500, n=600, seed=11))


@pytest.fixture(scope="session")
def quick_config():
    return EmConfig(n_starts=3, kappa_grid=(1e-2, 1.0), seed=5)


@pytest.fixture(scope="session")
def small_fit(small_s1, quick_config):
    return em_fit(small_s1, quick_config)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
