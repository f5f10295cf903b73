import numpy as np
import pytest

from exitmc import Annulus, Ball, SimParams, backend


@pytest.fixture
def unit_ball():
    return Ball((0.0, 0.0, 0.0), 1.0)


@pytest.fixture
def shell():
    return Annulus((0.0, 0.0, 0.0), 1.0, 2.0)


@pytest.fixture
def coarse():
    # a coarse step keeps unit tests fast; accuracy is checked in test_acceptance
    from exitmc import EulerMaruyama
    return SimParams(scheme=EulerMaruyama(1e-3), seed=11)


@pytest.fixture(params=backend.available())
def backend_name(request):
    return request.param


def pytest_configure(config):
    np.set_printoptions(precision=6)


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number, ok, detail):
        _ACCEPTANCE.append((number, bool(ok), detail))
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
