import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mmnoise import kernels
from mmnoise._accel import HAVE_NUMBA
from mmnoise.model import ModelProfile, ev_reference_profile

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")

BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])


@pytest.fixture
def ev_profile() -> ModelProfile:
    return ev_reference_profile()


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run a test once per available kernel backend."""
    previous = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(20241016)


_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line; lines are repeated in the terminal summary."""

    def record(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
