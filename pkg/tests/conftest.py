import numpy as np
import pytest

from stochheat.grid import GridSpec


@pytest.fixture
def small_grid():
    return GridSpec(d=1, L=16.0, N=256, T=0.1, M=100)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    # acceptance tests record one "criterion N PASS|FAIL ..." line each
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            lines += [v for k, v in getattr(rep, "user_properties", []) if k == "criterion" and rep.when == "call"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
