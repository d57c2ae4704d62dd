import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("medflow", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("medflow")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Append ``(label, passed, detail)`` lines for the end-of-run summary."""
    return request.config.stash[ACCEPTANCE].append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance")
    for label, passed, detail in sorted(lines, key=lambda t: t[0]):
        terminalreporter.write_line(f"{label} {'PASS' if passed else 'FAIL'}  {detail}")
