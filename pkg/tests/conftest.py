import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stsep.geometry import PointPattern, Window

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def unit():
    return Window.unit_cube()


@pytest.fixture
def lshape():
    # three quarters of the unit square, T = [0, 1]
    return Window.polygon([(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)])


@pytest.fixture
def uniform_pattern(unit):
    rng = np.random.default_rng(11)
    return PointPattern(rng.random((300, 3)), unit)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and assert it."""

    def _report(k, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
