import numpy as np
import pytest

import tunnelstat as ts
from tunnelstat.resonance import find_resonances

_criteria: list[tuple[int, str, bool, str]] = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(line)
    _criteria.append((number, name, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(_criteria):
        terminalreporter.write_line(
            f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        )


@pytest.fixture(scope="session")
def dd50():
    return ts.double_delta(50.0)


@pytest.fixture(scope="session")
def dd50_resonances(dd50):
    return find_resonances(dd50)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)
