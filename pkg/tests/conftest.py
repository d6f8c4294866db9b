import numpy as np
import pytest
from hypothesis import HealthCheck, settings


settings.register_profile("sgflow", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("sgflow")

_ACCEPTANCE = []


@pytest.fixture
def record_criterion():
    """Collects one line per acceptance criterion for the terminal summary."""

    def record(number, title, ok, detail):
        _ACCEPTANCE.append((number, title, ok, detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
