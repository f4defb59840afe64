import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gmrf_mtl.graph import GraphTopology, build_laplacian, random_topology

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by test_acceptance, echoed once at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path3():
    return build_laplacian(GraphTopology(3, ((0, 1, 1.0), (1, 2, 1.0))))


@pytest.fixture
def two_node():
    return build_laplacian(GraphTopology(2, ((0, 1, 2.0),)))


@pytest.fixture
def net10():
    return build_laplacian(random_topology(10, 8, rng=np.random.default_rng(273)))
