import pytest

from cbfem.contracts import table1_contract, table1_market
from cbfem.fem import build_mesh
from cbfem.stepper import full_solve


@pytest.fixture(scope="session")
def contract():
    return table1_contract()


@pytest.fixture(scope="session")
def market():
    return table1_market()


@pytest.fixture(scope="session")
def p2_200(contract, market):
    """Reference P2 solve with n_E = n_t = 200 on [-6, 2]."""
    return full_solve(build_mesh(-6.0, 2.0, 200, 2), contract, market, theta=0.5, n_t=200)


@pytest.fixture(scope="session")
def p1_200(contract, market):
    return full_solve(build_mesh(-6.0, 2.0, 200, 1), contract, market, theta=0.5, n_t=200)


_CRITERIA = []


@pytest.fixture(scope="session")
def criterion_log():
    """Collects one pass/fail line per acceptance criterion."""
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in _CRITERIA:
        terminalreporter.write_line(line)
