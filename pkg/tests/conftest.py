import pytest

from peel_lab.checks import Model
from peel_lab.weights import make_2p_angulation


@pytest.fixture(scope="session")
def quad():
    """Critical quadrangulations with all derived data cached."""
    return Model(make_2p_angulation(2))


@pytest.fixture(scope="session")
def hexa():
    return Model(make_2p_angulation(3))


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
