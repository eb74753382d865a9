import warnings

import numpy as np
import pytest

from powershare import scenario
from powershare.graph import build_graph, laplacian

GOLDEN_EDGES = [(1, 2), (1, 4), (1, 5), (2, 4), (3, 4), (3, 5), (4, 5), (4, 6), (5, 6)]
GOLDEN_CAPS = np.array([600.0, 450.0, 300.0, 150.0, 750.0, 150.0])


@pytest.fixture(scope="session")
def golden_graph():
    return build_graph(6, [(i, j, 6.0) for i, j in GOLDEN_EDGES])


@pytest.fixture(scope="session")
def golden_laplacian(golden_graph):
    return laplacian(golden_graph)


@pytest.fixture(scope="session")
def golden_scenario():
    return scenario.bundled_scenario()


@pytest.fixture(scope="session")
def golden_records(golden_scenario):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return scenario.simulate(golden_scenario)


def at(records, sc, t):
    return records[int(round(t / sc.dt))]


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record a verdict for an acceptance criterion, then assert it."""

    def record(number: int, checks: list[tuple[str, bool]]):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{'ok' if passed else 'FAILED'} {name}" for name, passed in checks)
        _CRITERIA[number] = (ok, detail)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
