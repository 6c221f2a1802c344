import numpy as np
import pytest

from ecpda.network import NetworkInstance


@pytest.fixture
def four_nodes():
    # 1-d nodes at 0, 1, 10, 11
    return NetworkInstance.from_points([0.0, 1.0, 10.0, 11.0], gamma=0.1)


@pytest.fixture
def two_pairs():
    return NetworkInstance.from_points([0.0, 1.0, 100.0, 101.0], gamma=0.01)


@pytest.fixture
def toy():
    return NetworkInstance.from_points([-1.0, 1.0])


def random_instance(rng, n=8, d=2, gamma=0.0):
    return NetworkInstance.from_points(rng.uniform(0, 10, size=(n, d)), gamma=gamma)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
