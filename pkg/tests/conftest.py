import numpy as np
import pytest

from leaktrace.crypto import SeededRandomness
from leaktrace.document import random_document

# Filled by tests/test_acceptance.py, printed once at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def srng():
    return SeededRandomness(b"tests")


@pytest.fixture(scope="session")
def doc256():
    return random_document(np.random.default_rng(7), 256, 256)


@pytest.fixture(scope="session")
def doc512():
    return random_document(np.random.default_rng(11), 512, 512)
