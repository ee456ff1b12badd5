import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS, summary_lines

    if RESULTS:
        terminalreporter.section("acceptance")
        for line in summary_lines():
            terminalreporter.write_line(line)
