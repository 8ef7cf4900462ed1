import numpy as np
import pytest

from fixedtime_cor.scenario import build_design, reference_config


@pytest.fixture(scope="session")
def reference_design():
    return build_design(reference_config(1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
