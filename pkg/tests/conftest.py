import numpy as np
import pytest

from nondiag.coeffmodel import model_from_catalog


@pytest.fixture(scope="session")
def capillary():
    return model_from_catalog("capillary_demo", {"q": 1.0, "a": 1.0, "c": 1.0})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def clip01(z):
    return np.clip(z, 0.0, 1.0)


def boundary_touching_data(x):
    """Initial data with values on every edge of the triangle (the setup used by the invariant-region runs)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    u1 = clip01(1.5 - 3.0 * x)
    u2 = (1.0 - u1) * clip01((0.9 - x) / 0.2)
    return np.stack([u1, u2], axis=-1)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        terminalreporter.write_line(results[num])
