import re

import pytest

from crslab.graph import complete_bipartite, cycle
from crslab.recursive import fill_tables
from crslab.selection import INFINITE, vertex_selection


@pytest.fixture(scope="session")
def c5():
    return cycle(5, 0.5)


@pytest.fixture(scope="session")
def k33():
    return complete_bipartite(3)


@pytest.fixture(scope="session")
def sel5():
    return vertex_selection(5)


@pytest.fixture(scope="session")
def sel_inf():
    return vertex_selection(INFINITE)


@pytest.fixture(scope="session")
def table_c5_small(c5, sel5):
    # small but real: enough phases/samples for the engines to act nontrivially
    return fill_tables(c5, sel5, T=6, delta=0.1, Q=400, seed=9001)


@pytest.fixture(scope="session")
def table_k33_small(k33, sel_inf):
    return fill_tables(k33, sel_inf, T=6, delta=0.1, Q=400, seed=9002)


_CRIT = re.compile(r"test_acceptance\.py::test_criterion(\d+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    status: dict[int, bool] = {}
    for outcome, ok in (("passed", True), ("failed", False), ("error", False)):
        for rep in terminalreporter.stats.get(outcome, []):
            m = _CRIT.search(getattr(rep, "nodeid", ""))
            if m:
                k = int(m.group(1))
                status[k] = status.get(k, True) and ok
    if not status:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(status):
        verdict = "PASS" if status[k] else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d}: {verdict}")
