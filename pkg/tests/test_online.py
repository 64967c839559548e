import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multiserver_dp import combinators as cb
from multiserver_dp.online import (
    OnlineAlgorithm,
    check_internal_privacy,
    output_distribution,
    run_online,
    state_distribution,
    stream_output_distribution,
    stream_state_distribution,
)
from multiserver_dp.prob import Domain, EnumerationLimitError, FiniteDist, align, ln, make_rng, statistical_distance

BITS = Domain((0, 1))


def running_count(m: int) -> OnlineAlgorithm:
    return OnlineAlgorithm(lambda: FiniteDist.point(0), lambda i, s, x: FiniteDist.point(s + x),
                           FiniteDist.point, m, BITS, "count")


def rr_log(m: int, eps=ln(2)) -> OnlineAlgorithm:
    """Keeps one randomized-response bit per element."""
    rr = cb.randomized_response(eps)
    return OnlineAlgorithm(lambda: FiniteDist.point(()),
                           lambda i, s, x: rr[x].map(lambda y: s + (y,)),
                           lambda s: FiniteDist.point(sum(s)), m, BITS, "rr-log")


def test_running_count_state_is_deterministic():
    assert state_distribution(running_count(4), (1, 0, 1, 1), 3).as_dict() == {2: 1}


def test_run_online_traces_every_state():
    z, snaps = run_online(running_count(3), (1, 1, 0), make_rng(0), trace=True)
    assert z == 2
    assert [s.state for s in snaps] == [0, 1, 2, 2]


def test_stream_length_is_enforced():
    with pytest.raises(ValueError):
        run_online(running_count(3), (1, 1), make_rng(0))


@given(st.lists(st.sampled_from([0, 1]), min_size=3, max_size=3))
def test_state_law_of_rr_log_is_a_product(xs):
    law = state_distribution(rr_log(3), xs, 3)
    for ys, w in law.items():
        want = Fraction(1)
        for x, y in zip(xs, ys):
            want *= Fraction(2, 3) if x == y else Fraction(1, 3)
        assert w == want


def test_stream_state_law_is_the_prior_mixture():
    prior = FiniteDist.bernoulli(Fraction(1, 5))
    alg = rr_log(2)
    got = stream_state_distribution(alg, prior, 2)
    mix = {}
    for xs in itertools.product((0, 1), repeat=2):
        w = prior.prob(xs[0]) * prior.prob(xs[1])
        for s, v in state_distribution(alg, xs, 2).items():
            mix[s] = mix.get(s, 0) + w * v
    assert got.as_dict() == {s: v for s, v in mix.items() if v}
    out = stream_output_distribution(alg, prior)
    assert out.as_dict() == got.map(sum).as_dict()


def test_output_law_by_sampling():
    alg = rr_log(2)
    law = output_distribution(alg, (1, 0))
    rng = make_rng(11)
    n = 5000
    freq = sum(run_online(alg, (1, 0), rng)[0] == 1 for _ in range(n)) / n
    assert abs(freq - float(law.prob(1))) < 4 * (0.25 / n) ** 0.5


def test_running_count_is_not_internally_private():
    rep = check_internal_privacy(running_count(2), ln(100), Fraction(1, 2))
    assert not rep.satisfied
    assert rep.max_delta == 1


def test_rr_log_is_private_at_its_epsilon_and_no_lower():
    assert check_internal_privacy(rr_log(3), ln(2), 0).satisfied
    rep = check_internal_privacy(rr_log(3), ln(Fraction(3, 2)), 0)
    assert not rep.satisfied
    # P(y = x) - (3/2) P'(y = x) = 2/3 - 1/2
    assert rep.max_delta == Fraction(1, 6)


def test_cell_count_and_filters():
    m = 3
    rep = check_internal_privacy(rr_log(m), ln(2), 0)
    # time t: 2^t prefixes, each with t positions and one larger alternative on half of them
    assert len(rep.cells) == sum(t * 2 ** (t - 1) for t in range(m + 1))
    only = check_internal_privacy(rr_log(m), ln(2), 0, times=[2], positions=[1])
    assert {(c.t, c.position) for c in only.cells} == {(2, 1)}
    assert len(only.cells) == 2


def test_laws_kept_on_request():
    rep = check_internal_privacy(rr_log(1), ln(2), 0, keep_laws=True)
    a, b = rep.cells[0].laws
    assert statistical_distance(a, b) == Fraction(1, 3)


def test_internal_privacy_ceiling():
    with pytest.raises(EnumerationLimitError):
        check_internal_privacy(rr_log(6), ln(2), 0, ceiling=20)
