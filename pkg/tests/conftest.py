import os
import sys

import numpy as np
import pytest

# keep test runs independent of the host core count unless a test asks otherwise
os.environ.setdefault("RTJUMP_WORKERS", "1")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
