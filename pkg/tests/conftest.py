import pytest

from dynamics.base_map import make_base_map
from dynamics.skew import VianaParams, build_system, find_misiurewicz

REFERENCE_ALPHA = 1e-2


@pytest.fixture(scope="session")
def uniform_base():
    return make_base_map("uniform_linear", d=16)


@pytest.fixture(scope="session")
def perturbed_base():
    return make_base_map("perturbed_linear", d=16, amplitude=1e-3)


@pytest.fixture(scope="session")
def a0():
    return find_misiurewicz()


@pytest.fixture(scope="session")
def reference_system(uniform_base, a0):
    return build_system(VianaParams(a0, REFERENCE_ALPHA, uniform_base))


@pytest.fixture(scope="session")
def chebyshev_system(uniform_base):
    """a0 = 2, alpha = 0: the fiber is the Chebyshev map on [-2, 2]."""
    return build_system(VianaParams(2.0, 0.0, uniform_base))
