import numpy as np
import pytest

from patchdiff.model import LinearExchange, make_model


@pytest.fixture(scope="session")
def equal_pair():
    """Two equal patches coupled at rate 1."""
    return make_model((1.0, 1.0), LinearExchange.two_patch(1.0))


@pytest.fixture(scope="session")
def half_pair():
    """Second patch half the size of the first."""
    return make_model((1.0, 0.5), LinearExchange.two_patch(1.0))


@pytest.fixture(scope="session")
def uncoupled():
    # no exchange: each coordinate is an independent one-patch diffusion
    return make_model((1.0, 1.0), LinearExchange.two_patch(0.0))


@pytest.fixture
def gen():
    return np.random.Generator(np.random.Philox(12345))


# one line per acceptance criterion, printed at the end of the run
_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
