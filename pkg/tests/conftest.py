from fractions import Fraction

import pytest

from multiserver_dp import combinators as cb
from multiserver_dp.prob import FiniteDist, ln
from multiserver_dp.protocol import CommDag, Protocol

LN2 = ln(2)


def rr_two_server(n: int, eps=LN2) -> Protocol:
    rr = cb.randomized_response(eps)
    r = cb.independent_randomizer((0, 1), [rr, rr], name="rr-pair")
    return Protocol((r,) * n, (cb.sum_server(), cb.sum_server()), CommDag(2, frozenset({(1, 2)})), name="rr")


def shares_toy3(n: int = 2) -> Protocol:
    r = cb.additive_share_randomizer((0, 1), 3, 3, pre=cb.randomized_response(LN2))
    servers = tuple(cb.sum_server(3) for _ in range(3))
    return Protocol((r,) * n, servers, CommDag(3, frozenset({(1, 3), (2, 3)})), name="toy3")


def xor_shares(n: int = 2) -> Protocol:
    r = cb.additive_share_randomizer((0, 1), 2, 2)
    return Protocol((r,) * n, (cb.sum_server(2), cb.sum_server(2)), CommDag(2, frozenset({(1, 2)})), name="xor")


@pytest.fixture
def uniform_bit():
    return FiniteDist.uniform((0, 1))


@pytest.fixture
def skewed_bit():
    return FiniteDist.bernoulli(Fraction(1, 3))


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
