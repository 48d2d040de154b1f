import numpy as np
import pytest

_CRITERIA = pytest.StashKey[dict]()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.fixture
def record_criterion(request):
    """Record one acceptance line: ``record_criterion(number, passed, detail)``."""
    table = request.config.stash[_CRITERIA]

    def record(number: int, passed: bool, detail: str) -> None:
        table[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_CRITERIA, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        passed, detail = table[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
