import os

import numpy as np
import pytest

# keep simulation thread count fixed unless a test overrides it
os.environ.setdefault("OCCSLIDE_NUM_THREADS", "1")

from occslide.systems import example_noise, example_system  # noqa: E402


@pytest.fixture(scope="session")
def example():
    return example_system(), example_noise(0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


@pytest.fixture
def report():
    """Record one acceptance line: report(number, passed, text)."""

    def _report(number, passed, text):
        ACCEPTANCE_LINES[number] = f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}: {text}"
        print(ACCEPTANCE_LINES[number])
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
