import hypothesis
import pytest

from whabm.coefficients import CoefficientModel
from whabm.quadrature import DEFAULT_QUAD

hypothesis.settings.register_profile(
    "whabm", deadline=None, max_examples=60,
    suppress_health_check=[hypothesis.HealthCheck.too_slow])
hypothesis.settings.load_profile("whabm")


@pytest.fixture(scope="session")
def const_unit():
    return CoefficientModel.constant(1.0, 1.0)


@pytest.fixture(scope="session")
def onejump():
    return CoefficientModel((0.5,), (1.0, -1.0), (1.0, 1.0))


@pytest.fixture(scope="session")
def quad():
    return DEFAULT_QUAD
