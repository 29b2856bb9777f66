import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nhgeom.operators import PAULI

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

I2, X, Y, Z = PAULI["I"], PAULI["X"], PAULI["Y"], PAULI["Z"]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def fro(a):
    return float(np.linalg.norm(a))


# -- acceptance report ---------------------------------------------------------

_REPORT = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT] = []


@pytest.fixture
def acceptance(request):
    """Record a one-line verdict for an acceptance criterion."""
    lines = request.config.stash[_REPORT]

    def record(label, ok, detail):
        lines.append((label, f"criterion {label:<12} {'PASS' if ok else 'FAIL'}  {detail}"))
        return ok

    return record


def _label_key(label):
    head, _, tail = label.partition("-")
    return (int(head), tail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines, key=lambda item: _label_key(item[0])):
        terminalreporter.write_line(line)
