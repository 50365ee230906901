import numpy as np
import pytest

from geolab.boundary_fields import clear_caches
from geolab.curvature_models import conjugate_free_family, constant_profile

FAMILY_SIZE = 50


@pytest.fixture(scope="session")
def seeded_family():
    """Sign-changing seeded profiles, conjugate-free on [-10, 10]; n cycles 2, 3, 4."""
    return conjugate_free_family(FAMILY_SIZE)


@pytest.fixture(scope="session")
def constant_models():
    return [constant_profile(n, c, horizon=64.0) for c in (0.0, -1.0, -4.0) for n in (2, 3, 4)]


@pytest.fixture(autouse=True, scope="module")
def _fresh_caches():
    yield
    clear_caches()


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def pytest_terminal_summary(terminalreporter):
    from tests.test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[key])
