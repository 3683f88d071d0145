import pytest

from mtransfer.core import TransferPayload
from mtransfer.scenario import BalanceRequest, Scenario, TransferRequest, WorkloadItem

# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE = {}


def transfer(at, node, dest, amount):
    return WorkloadItem(at, node, TransferRequest(dest, amount))


def read(at, node, j):
    return WorkloadItem(at, node, BalanceRequest(j))


def P(dest, amount):
    return TransferPayload(dest, amount)


@pytest.fixture
def three_node_crash():
    return Scenario(
        3, 1, "crash", [10, 5, 3], seed=7, max_delay=5,
        workload=[transfer(0, 1, 2, 4), transfer(2, 3, 1, 3), read(30, 2, 1)],
    )


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
