import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from irs_forge.geometry import IncidentAngle, ReflectionAngle

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_incident(rng, shape=()):
    return IncidentAngle(rng.uniform(0, np.pi / 2, shape), rng.uniform(0, 2 * np.pi, shape),
                         rng.uniform(0, 2 * np.pi, shape))


def random_reflection(rng, shape=()):
    return ReflectionAngle(rng.uniform(0, np.pi / 2, shape), rng.uniform(0, 2 * np.pi, shape))


def relerr(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and return the outcome."""
    def record(tag, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {tag}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
