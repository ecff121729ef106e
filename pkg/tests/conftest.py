import numpy as np
import pytest

from subdiffusion.params import PhysicalParams


@pytest.fixture
def unit():
    """m = zeta = kbt = 1, free particle."""
    return PhysicalParams(1.0, 1.0, 1.0)


@pytest.fixture
def unit_harmonic():
    return PhysicalParams(1.0, 1.0, 1.0, 1.0)


def lag1_autocorr(x):
    x = np.asarray(x) - np.mean(x)
    return float(np.dot(x[:-1], x[1:]) / np.dot(x, x))


# criterion -> (passed, detail), filled by the acceptance tests
ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    def _record(name, ok, detail=""):
        ACCEPTANCE[name] = (bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: int(s[1:])):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
