import numpy as np
import pytest

from eulernet import kernels
from eulernet.tensor import precision


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def f64():
    """Run the test body with float64 as the default tensor dtype."""
    with precision("float64"):
        yield


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Parametrise over every kernel backend that is importable."""
    with kernels.use_backend(request.param):
        yield request.param


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
