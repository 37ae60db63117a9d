import numpy as np
import pytest
from hypothesis import settings

from mvtrace.gridmap import GridMap
from mvtrace.manifold import TargetManifold

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


SPHERE = TargetManifold.from_id("sphere:3")
CIRCLE = TargetManifold.from_id("circle")
NORTH = np.array([0.0, 0.0, 1.0])


def sphere_point(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def step_map_1d(m, a, tail, n=8, lo=2, hi=5, h=0.25, origin=-1.0):
    """Cells lo..hi-1 carry a, the rest and the tail carry ``tail``."""
    vals = np.broadcast_to(tail, (n, m.nu)).copy()
    vals[lo:hi] = a
    return GridMap(np.array([origin]), h, vals, tail, m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
