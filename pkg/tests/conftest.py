from __future__ import annotations

import helpers
import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if helpers.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in helpers.RESULTS:
            terminalreporter.write_line(line)
