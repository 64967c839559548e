import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import LN2, rr_two_server, xor_shares
from multiserver_dp import combinators as cb
from multiserver_dp.prob import Domain, EnumerationLimitError, FiniteDist, align, ln, make_rng, statistical_distance
from multiserver_dp.protocol import (
    Attack,
    CommDag,
    Protocol,
    ProtocolError,
    attacks_up_to,
    check_protocol_dp,
    execute,
    marginal,
    neighbor_pairs,
    output_distribution,
    output_distribution_under,
    transcript_distribution,
    view_distribution,
    view_keys,
)


def bit_sum_law(ps):
    """Law of a sum of independent bits with Pr[1] = p for each p in ps."""
    law = {0: Fraction(1)}
    for p in ps:
        nxt = {}
        for s, w in law.items():
            nxt[s] = nxt.get(s, 0) + w * (1 - p)
            nxt[s + 1] = nxt.get(s + 1, 0) + w * p
        law = nxt
    return law


# -- structure ------------------------------------------------------------------

def test_backward_edge_is_rejected_with_its_name():
    with pytest.raises(ProtocolError, match=r"edge \(3,2\)"):
        CommDag(3, frozenset({(1, 3), (3, 2)}))


def test_every_non_sink_needs_an_out_edge():
    with pytest.raises(ProtocolError, match="server 1 has no out-edge"):
        CommDag(3, frozenset({(2, 3)}))


def test_randomizer_arity_must_match_server_count():
    r = cb.clear_randomizer((0, 1), 3)
    with pytest.raises(ProtocolError, match="sends 3 messages"):
        Protocol((r,), (cb.sum_server(), cb.sum_server()), CommDag(2, frozenset({(1, 2)})))


def test_complete_dag_has_all_forward_edges():
    assert CommDag.complete(4).edges == frozenset({(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)})


@pytest.mark.parametrize("x", [0, 1])
def test_single_additive_share_is_uniform(x):
    r = cb.additive_share_randomizer((0, 1), 2, 2)
    assert marginal(r, [1])(x).as_dict() == {(0,): Fraction(1, 2), (1,): Fraction(1, 2)}


# -- execution and enumeration ----------------------------------------------------

@pytest.mark.parametrize("xs", list(itertools.product((0, 1), repeat=2)))
def test_output_law_of_randomized_response_sum(xs):
    p = rr_two_server(2)
    keep = Fraction(2, 3)
    ps = [keep if x else 1 - keep for x in xs for _ in range(2)]
    assert output_distribution(p, xs).as_dict() == {k: v for k, v in bit_sum_law(ps).items() if v}


def test_transcript_marginal_matches_output_law():
    p = rr_two_server(2)
    full = transcript_distribution(p, (1, 0)).map(lambda rec: rec[("out",)])
    assert statistical_distance(*align(full, output_distribution(p, (1, 0)))) == 0


def test_sampled_outputs_follow_the_exact_law():
    p = rr_two_server(2)
    law = output_distribution(p, (1, 1))
    rng = make_rng(3)
    n = 6000
    counts = {}
    for _ in range(n):
        z = execute(p, (1, 1), rng).output
        counts[z] = counts.get(z, 0) + 1
    for z, w in law.items():
        assert abs(counts.get(z, 0) / n - float(w)) < 4 * (float(w) * (1 - float(w)) / n) ** 0.5 + 1e-9


def test_execution_is_reproducible_under_a_seed():
    p = rr_two_server(2)
    a = [execute(p, (0, 1), make_rng(9)).messages for _ in range(3)]
    assert a[0] == a[1] == a[2]


def test_inputs_are_validated():
    with pytest.raises(ProtocolError):
        execute(rr_two_server(2), (0, 2), make_rng(0))
    with pytest.raises(ProtocolError):
        output_distribution(rr_two_server(2), (0,))


def test_prior_mixture_of_output_laws():
    p = rr_two_server(1)
    prior = FiniteDist.bernoulli(Fraction(1, 4))
    got = output_distribution_under(p, prior)
    want = {z: Fraction(3, 4) * output_distribution(p, (0,)).prob(z) + Fraction(1, 4) * output_distribution(p, (1,)).prob(z)
            for z in (0, 1, 2)}
    assert got.as_dict() == want


def test_ceiling_stops_enumeration():
    with pytest.raises(EnumerationLimitError):
        transcript_distribution(rr_two_server(3), (0, 0, 0), ceiling=10)


# -- views and privacy ------------------------------------------------------------

def test_view_keys_for_corrupted_first_server():
    keys = view_keys(rr_two_server(2), Attack(frozenset(), frozenset({1})))
    assert keys == sorted([("out",), ("z", 1, 2), ("y", 1, 1), ("y", 2, 1)])


def test_view_of_secret_sharing_server_hides_inputs_except_output():
    p = xor_shares(2)
    attack = Attack(frozenset(), frozenset({1}))
    v = view_distribution(p, attack, (1, 0)).map(lambda rec: (rec[("y", 1, 1)], rec[("y", 2, 1)]))
    assert v.as_dict() == {(a, b): Fraction(1, 4) for a in (0, 1) for b in (0, 1)}


def test_corrupted_user_input_is_part_of_the_view():
    rec = view_distribution(rr_two_server(2), Attack(frozenset({2}), frozenset()), (0, 1)).support()[0]
    assert rec[("x", 2)] == 1


@given(st.integers(1, 3), st.integers(2, 3), st.data())
@settings(max_examples=25)
def test_neighbor_pair_count(n, d, data):
    honest = data.draw(st.sets(st.integers(1, n)))
    pairs = list(neighbor_pairs(Domain(tuple(range(d))), n, honest))
    assert len(pairs) == len(honest) * d ** (n - 1) * d * (d - 1) // 2
    for i, x, x2 in pairs:
        assert [j for j in range(n) if x[j] != x2[j]] == [i - 1]


def test_attack_enumeration_counts():
    attacks = list(attacks_up_to(rr_two_server(2), 1))
    # (no server or one of two) x (user coalitions of size < n)
    assert len(attacks) == 3 * 3


def test_two_randomized_response_messages_compose():
    # a corrupted server sees one RR(ln 2) message per user plus a function of the other;
    # together the pair is exactly (ln 4)-private and no better
    p = rr_two_server(2)
    assert check_protocol_dp(p, 1, ln(4), 0).satisfied
    rep = check_protocol_dp(p, 1, LN2, 0)
    assert not rep.satisfied
    assert rep.max_delta > 0


def test_secret_sharing_output_reveals_parity():
    rep = check_protocol_dp(xor_shares(2), 1, ln(100), Fraction(1, 2))
    assert not rep.satisfied
    assert rep.max_delta == 1


def test_clear_text_protocol_fails_everywhere():
    r = cb.clear_randomizer((0, 1), 2)
    p = Protocol((r, r), (cb.sum_server(), cb.sum_server()), CommDag(2, frozenset({(1, 2)})))
    assert check_protocol_dp(p, 0, ln(1000), Fraction(9, 10)).max_delta == 1
