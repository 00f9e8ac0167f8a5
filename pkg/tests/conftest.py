from functools import lru_cache

import pytest

from peanolap.curves import generate, identify
from peanolap.graphs import build_graph
from peanolap.spectra import assemble, eigensolve

# filled by tests/test_acceptance.py, printed after the run
CRITERIA = []


@lru_cache(maxsize=None)
def setup(fractal, level, vectors=False):
    """(curve, idmap, operator, result), cached across the session."""
    curve = generate(fractal, level)
    idmap = identify(curve)
    L = assemble(build_graph(curve, idmap))
    return curve, idmap, L, eigensolve(L, vectors=vectors)


@pytest.fixture
def solved():
    return setup


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERIA:
        terminalreporter.write_line(line)
