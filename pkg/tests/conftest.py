import math

import numpy as np
import pytest

from berrysim.kernel import SpinSystem

DELTA_HZ = 221.3
J_HZ = 209.2
NU1_OPT_HZ = 441.8


@pytest.fixture
def system():
    return SpinSystem(DELTA_HZ, J_HZ)


def series_expm(a, terms=12):
    """Truncated Taylor series of exp(a); independent of the closed forms."""
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms + 1):
        term = term @ a / k
        out = out + term
    return out


def analytic_line_phase_deg(offset_hz, nu1_hz):
    # 4 * pi (1 - cos theta), computed without the package
    return 4 * math.degrees(math.pi * (1 - offset_hz / math.hypot(offset_hz, nu1_hz)))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
