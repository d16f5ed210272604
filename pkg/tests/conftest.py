import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ggmix", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ggmix")


def random_spd(rng, p, n_extra=3):
    A = rng.normal(size=(p + n_extra, p))
    return A.T @ A / (p + n_extra)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(n_k=50, p=2, sep=5.0, seed=0):
    """Two spherical unit-variance clusters at -sep*1 and +sep*1."""
    r = np.random.default_rng(seed)
    X = np.vstack([r.normal(size=(n_k, p)) - sep, r.normal(size=(n_k, p)) + sep])
    return X, np.repeat([0, 1], n_k)


# Acceptance report ------------------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture
def record():
    """``record(number, ok, detail)`` stores one report line per acceptance criterion."""

    def _record(number, ok, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
