import pytest

from psq import Exponential, KernelWorkspace, ModelParams

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def mm1():
    """lambda = 0.5, Exp(1): rho = 0.5."""
    return ModelParams(0.5, Exponential(1.0))


@pytest.fixture(scope="session")
def mm1_ws(mm1):
    ws = KernelWorkspace(mm1, 1e-3, 6.0)
    ws.prepare(3)
    return ws
