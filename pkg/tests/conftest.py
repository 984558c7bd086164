import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from umst_net.city import SyntheticCityConfig, generate_synthetic_city  # noqa: E402
from umst_net.graph import build_complete_graph  # noqa: E402


@pytest.fixture(scope="session")
def city26():
    return build_complete_graph(generate_synthetic_city(SyntheticCityConfig(n_hotspots=26, rng_seed=0)))


@pytest.fixture(scope="session")
def city10():
    return build_complete_graph(generate_synthetic_city(SyntheticCityConfig(n_hotspots=10, rng_seed=3)))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
