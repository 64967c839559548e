import math
import pickle
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import LN2, rr_two_server, xor_shares
from multiserver_dp.online import check_internal_privacy, run_online, stream_output_distribution
from multiserver_dp.prob import FiniteDist, align, ln, make_rng, posterior, statistical_distance
from multiserver_dp.protocol import output_distribution_under
from multiserver_dp.transform import (
    BUDGET_EXHAUSTED,
    RejectionSampler,
    SamplerOptions,
    TwoServerParts,
    build_m1,
    build_m2,
    build_m3,
    sample_budget,
    tail_sample_count,
    tight_sample_count,
    transform_protocol,
)

priors = st.fractions(Fraction(1, 20), Fraction(19, 20), max_denominator=20).map(FiniteDist.bernoulli)


def sd(p, q):
    return statistical_distance(*align(p, q))


# -- budget ---------------------------------------------------------------------

def budget_by_hand(n, e_to_eps, beta):
    ell = 1 / (2 * e_to_eps ** 2)
    v = math.ceil(n + (2 * n / ell) * math.log(1 / ell) + (2 / ell) * math.log(1 / beta))
    return ell, v


@pytest.mark.parametrize("n,eps,e_to_eps,beta", [(10, 0, 1, 0.05), (1, LN2, 2, 0.1), (2, LN2, 2, 0.1),
                                                 (3, ln(4), 4, 0.01)])
def test_sample_budget_matches_the_closed_form(n, eps, e_to_eps, beta):
    b = sample_budget(n, eps, beta)
    ell, v = budget_by_hand(n, e_to_eps, beta)
    assert b.ell == Fraction(1, 2 * e_to_eps ** 2) == ell
    assert (b.v, b.m) == (v, n + v)


def test_zero_epsilon_budget_for_ten_users():
    assert sample_budget(10, 0, 0.05).m == 60


@given(st.integers(0, 30), st.floats(0.01, 0.5), st.floats(1e-4, 0.5))
def test_tight_count_never_exceeds_simplified_count(n, ell, beta):
    assert tight_sample_count(n, ell, beta) <= tail_sample_count(n, ell, beta)


def test_irrational_epsilon_budget_uses_floats():
    b = sample_budget(2, 0.5, 0.1)
    assert math.isclose(b.ell, 1 / (2 * math.e))


# -- first and second messages ----------------------------------------------------

def test_rates_for_randomized_response():
    parts = TwoServerParts(rr_two_server(1))
    # Pr[y | x] / (2 max_u Pr[y | u]) with keep probability 2/3
    assert parts.rate(1, 1, 1) == Fraction(1, 2)
    assert parts.rate(1, 1, 0) == Fraction(1, 4)
    assert parts.rate(1, 1, 0, normalized=False) == Fraction(1, 3)


def test_parts_require_two_servers():
    from conftest import shares_toy3
    with pytest.raises(Exception, match="two-server"):
        TwoServerParts(shares_toy3())


def test_second_law_is_conditional_on_first_share():
    parts = TwoServerParts(xor_shares(1))
    assert parts.second_law(1, 1, 0).as_dict() == {1: 1}
    assert parts.second_law(1, 0, 1).as_dict() == {1: 1}


# -- hybrids ----------------------------------------------------------------------

@settings(max_examples=10, deadline=None)
@given(priors, st.integers(1, 2))
def test_resampling_preserves_the_prior_output_law(prior, n):
    p = rr_two_server(n)
    base = output_distribution_under(p, prior)
    m1 = build_m1(p).output_distribution_under(prior)
    m2 = build_m2(p, prior).output_distribution_under()
    assert sd(base, m1) == 0
    assert sd(m1, m2) == 0


def test_resampling_changes_the_law_at_a_fixed_input():
    # equivalence only holds in distribution over the prior
    p = rr_two_server(1)
    prior = FiniteDist.uniform((0, 1))
    assert sd(build_m1(p).output_distribution((1,)), build_m2(p, prior).output_distribution((1,))) > 0


def test_resampling_sampler_matches_its_exact_law():
    p = rr_two_server(1)
    prior = FiniteDist.bernoulli(Fraction(1, 3))
    m2 = build_m2(p, prior)
    law = m2.output_distribution((1,))
    rng = make_rng(4)
    n = 6000
    hits = sum(m2.sample((1,), rng) == 2 for _ in range(n)) / n
    assert abs(hits - float(law.prob(2))) < 4 * math.sqrt(0.25 / n)


# -- rejection sampler ---------------------------------------------------------------

@given(priors, st.sampled_from([0, 1]))
def test_accepted_input_follows_the_posterior(prior, y):
    parts = TwoServerParts(rr_two_server(1))
    sampler = RejectionSampler(parts, 1)
    got = sampler.accepted_sample_distribution(1, y, prior)
    want = posterior(prior, lambda x: parts.first_law(1, x), y)
    assert sd(got, want) == 0


@given(priors, st.sampled_from([2, 3, 4]))
def test_acceptance_probability_stays_in_range(prior, base):
    eps = ln(base)
    parts = TwoServerParts(rr_two_server(1, eps))
    sampler = RejectionSampler(parts, 1)
    for y in (0, 1):
        a = sampler.acceptance_probability(1, y, prior)
        assert Fraction(1, 2 * base ** 2) <= a <= Fraction(1, 2)


def test_unbounded_sampler_matches_resampling_hybrid():
    p = rr_two_server(1)
    prior = FiniteDist.uniform((0, 1))
    law, residual = build_m3(p, 1).unbounded_output_distribution(prior)
    assert residual < Fraction(1, 10 ** 15)
    assert sd(law, build_m2(p, prior).output_distribution_under()) <= residual


def test_budgeted_sampler_is_within_beta_of_the_protocol():
    p = rr_two_server(1)
    prior = FiniteDist.uniform((0, 1))
    budget = sample_budget(1, LN2, 0.1)
    alg = build_m3(p, budget).compact().algorithm()
    got = stream_output_distribution(alg, prior)
    exhausted = got.prob(BUDGET_EXHAUSTED)
    assert sd(got, output_distribution_under(p, prior)) <= Fraction(1, 10)
    assert 0 < exhausted <= Fraction(1, 10)


def test_short_stream_exhausts_with_the_geometric_tail():
    p = rr_two_server(1)
    prior = FiniteDist.uniform((0, 1))
    # stream of n + 2: the single pending user is accepted with probability 3/8 per draw
    got = stream_output_distribution(build_m3(p, 3).algorithm(), prior)
    assert got.prob(BUDGET_EXHAUSTED) == Fraction(5, 8) ** 2


def test_sampled_runs_follow_the_exact_law():
    p = rr_two_server(1)
    alg = build_m3(p, 6).algorithm()
    prior = FiniteDist.uniform((0, 1))
    law = stream_output_distribution(alg, prior)
    rng = make_rng(21)
    n = 4000
    counts = {}
    for _ in range(n):
        xs = tuple(int(v) for v in rng.integers(0, 2, 6))
        z = run_online(alg, xs, rng)[0]
        counts[z] = counts.get(z, 0) + 1
    for z, w in law.items():
        w = float(w)
        assert abs(counts.get(z, 0) / n - w) < 4 * math.sqrt(w * (1 - w) / n) + 1e-9


def test_state_is_private_at_twice_epsilon():
    alg = build_m3(rr_two_server(2), 5).algorithm()
    assert check_internal_privacy(alg, 2 * LN2, 0).satisfied


def test_keeping_rates_in_the_state_breaks_privacy():
    alg = build_m3(rr_two_server(1), 3, options=SamplerOptions(erase=False)).algorithm()
    rep = check_internal_privacy(alg, 7 * LN2, 0)
    assert not rep.satisfied and rep.max_delta == 1


def test_dropping_the_rate_denominator_exceeds_one_half():
    parts = TwoServerParts(rr_two_server(1))
    assert parts.rate(1, 1, 1, normalized=False) == Fraction(2, 3) > Fraction(1, 2)


def test_exhausted_marker_is_a_picklable_singleton():
    assert pickle.loads(pickle.dumps(BUDGET_EXHAUSTED)) is BUDGET_EXHAUSTED
    assert sorted([BUDGET_EXHAUSTED, 3, 1]) == [1, 3, BUDGET_EXHAUSTED]


def test_compiled_protocol_description():
    c = transform_protocol(rr_two_server(2), ln(4), 0, 0.1)
    d = c.describe()
    assert d["stream_length"] == c.budget.m == sample_budget(2, ln(4), 0.1).m
    assert d["purification"][0]["notes"] == ["delta is zero; skipped"]
    eps, delta = c.target_privacy()
    assert repr(eps) == "ln(16384)" and delta == 0
