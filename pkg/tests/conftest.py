import time

import pytest

from twospeed.oracles import scenario
from twospeed.two_speed import solve_two_speed

_SOLVED: dict = {}
ACCEPTANCE_LINES: list = []


def solved(name: str):
    """(solution, wall seconds) for a built-in scenario, solved once per session."""
    if name not in _SOLVED:
        sc = scenario(name)
        t0 = time.perf_counter()
        sol = solve_two_speed(sc.problem(), sc.config)
        _SOLVED[name] = (sol, time.perf_counter() - t0)
    return _SOLVED[name]


@pytest.fixture(scope="session")
def solve():
    return solved


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
