import numpy as np
import pytest

from rateless.capacity import CodeSpec
from rateless.power_alloc import allocate_powers

# (criterion number, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE_RESULTS: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def reference_allocation():
    """Four layers, two bits per layer, P = 255, five blocks."""
    return allocate_powers(CodeSpec(8.0, 4, 5, 255.0, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}")
