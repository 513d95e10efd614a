import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pathpolicy import specs
from pathpolicy.layout import Layout
from pathpolicy.scm import random_spec

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def toy1():
    return specs.toy1()


@pytest.fixture(scope="session")
def toy2():
    return specs.toy2()


def make_random_spec(seed, stages=1, dims=None, card=2, u_card=2):
    rng = np.random.default_rng(seed)
    dims = dims if dims is not None else tuple(int(d) for d in rng.integers(1, 3, size=stages))
    return random_spec(rng, Layout(stages, dims, card), u_card=u_card)


def mc_close(sample, target, k=4.0):
    """|mean - target| within k standard errors."""
    sample = np.asarray(sample, dtype=float)
    se = sample.std(ddof=1) / np.sqrt(len(sample))
    return abs(sample.mean() - target) <= k * se + 1e-12


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
