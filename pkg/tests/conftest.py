import pytest

from svgmppi.config import load_config

# small sample counts keep a lap to a couple of seconds
FAST = ["solver.K=256", "solver.N=32", "solver.L=4", "scenario.laps=1"]


@pytest.fixture
def fast_cfg():
    def make(*sets):
        return load_config(None, FAST + list(sets))
    return make


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
