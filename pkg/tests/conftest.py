import numpy as np
import pytest


def random_simplex(rng, n, floor=0.0):
    v = rng.random(n) + floor
    return v / v.sum()


def random_instance(rng, n, floor=0.05):
    """Cost uniform on [0, 1] and two strictly positive marginals."""
    return rng.random((n, n)), random_simplex(rng, n, floor), random_simplex(rng, n, floor)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
