import numpy as np
import pytest

from respars.graph import Graph
from respars.synth import SBMSpec, sbm


def path3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


def triangle():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


def star(leaves=4):
    return Graph.from_edges(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def single_edge(w=1.0):
    return Graph.from_edges(2, [(0, 1, w)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def sbm_data():
    # the desk dataset used by training tests: SBM(120, 3, 0.3, 0.02), seed 1
    return sbm(SBMSpec())


# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}")
