import pytest
from hypothesis import HealthCheck, settings

from pimhe import bfv
from pimhe.pimsim import PimConfig
from pimhe.polyring import RingParams

settings.register_profile(
    "pimhe", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("pimhe")

# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"

    return record


@pytest.fixture(scope="session")
def cfg():
    return PimConfig()


@pytest.fixture(scope="session")
def small_params():
    """A 16-coefficient ring with the 27-bit modulus: fast and noise-safe."""
    return bfv.HeParams(RingParams(16, bfv.PARAMETER_TABLE[27]["q"], 1), 7)


@pytest.fixture(scope="session")
def small_keys(small_params):
    return bfv.keygen(small_params, 11)


@pytest.fixture(scope="session", params=[27, 54, 109])
def std_params(request):
    return bfv.standard_params(request.param)


@pytest.fixture(scope="session")
def keys27():
    params = bfv.standard_params(27)
    return (params, *bfv.keygen(params, 2027))
