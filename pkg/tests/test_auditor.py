import json
import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import LN2, rr_two_server, shares_toy3, xor_shares
from multiserver_dp import auditor as au
from multiserver_dp.counting import CountingParams
from multiserver_dp.prob import FiniteDist, align, ln, make_rng
from multiserver_dp.transform import SamplerOptions, TwoServerParts, build_m3, transform_protocol


def test_empirical_epsilon_of_randomized_response():
    p = FiniteDist.from_mapping({0: Fraction(2, 3), 1: Fraction(1, 3)})
    q = FiniteDist.from_mapping({0: Fraction(1, 3), 1: Fraction(2, 3)})
    assert math.isclose(au.empirical_epsilon(p, q, 0), math.log(2), abs_tol=1e-8)
    assert au.empirical_epsilon(p, p, 0) == 0


def test_empirical_epsilon_with_delta_slack():
    p = FiniteDist.from_mapping({0: Fraction(2, 3), 1: Fraction(1, 3)})
    q = FiniteDist.from_mapping({0: Fraction(1, 3), 1: Fraction(2, 3)})
    # with delta = 1/6 the event {0} needs 2/3 - e^eps/3 <= 1/6, so eps = ln(3/2)
    assert math.isclose(au.empirical_epsilon(p, q, Fraction(1, 6)), math.log(1.5), abs_tol=1e-8)


def test_empirical_epsilon_infinite_for_disjoint_mass():
    p, q = align(FiniteDist.point(0), FiniteDist.point(1))
    assert au.empirical_epsilon(p, q, Fraction(1, 2)) == math.inf


def test_reports_serialise_exact_numbers_as_strings():
    rep = au.AuditReport("protocol-dp", au.EXACT, {"epsilon": ln(2)}, au.PASS,
                         {"max_delta": Fraction(1, 3), "gap": math.inf})
    d = rep.to_dict()
    assert d["measured"] == {"max_delta": "1/3", "gap": "inf"}
    assert d["statement"]
    json.dumps(d)
    assert "PASS" in rep.line()


def test_bootstrap_interval_covers_a_known_distance():
    rng = make_rng(0)
    a = rng.integers(0, 2, 4000).tolist()
    b = (rng.random(4000) < 0.7).astype(int).tolist()
    est, lo, hi = au.bootstrap_sd(a, b, make_rng(1), resamples=300)
    assert lo <= 0.2 <= hi and abs(est - 0.2) < 0.05


def test_protocol_dp_audit_verdicts():
    assert au.audit_protocol_dp(rr_two_server(2), 1, ln(4), 0).passed
    rep = au.audit_protocol_dp(xor_shares(2), 1, LN2, 0)
    assert rep.verdict == au.VIOLATED and rep.witness is not None


def test_size_ceiling_makes_exact_audits_inconclusive():
    rep = au.audit_protocol_dp(rr_two_server(2), 1, ln(4), 0, ceiling=5)
    assert rep.verdict == au.INCONCLUSIVE


def test_transform_distance_falls_back_to_sampling():
    c = transform_protocol(rr_two_server(1), ln(4), 0, 0.1)
    prior = FiniteDist.uniform((0, 1))
    rep = au.audit_transform_distance(c, prior, au.EXACT, trials=300, seed=1, ceiling=3)
    assert rep.mode == au.MONTE_CARLO and rep.notes
    exact = au.audit_transform_distance(c, prior)
    assert exact.passed and exact.measured["sd"] == exact.measured["budget_exhausted_mass"]


def test_acceptance_audit_flags_unnormalised_rates():
    parts = TwoServerParts(rr_two_server(1))
    prior = FiniteDist.uniform((0, 1))
    assert au.audit_accept_rates(parts, prior, LN2).passed
    bad = au.audit_accept_rates(parts, prior, LN2, SamplerOptions(normalize_rate=False))
    assert bad.verdict == au.VIOLATED and bad.witness["rate"] == Fraction(2, 3)


def test_acceptance_floor_bound_is_below_the_true_floor():
    assert au.acceptance_floor_bound(LN2) == Fraction(1, 8)
    assert au.acceptance_floor_bound(0.3) <= 1 / (2 * math.exp(0.6))


def test_posterior_and_equivalence_audits():
    prior = FiniteDist.bernoulli(Fraction(1, 3))
    p = rr_two_server(2)
    assert au.audit_posterior(TwoServerParts(p), prior).passed
    assert au.audit_resampling_equivalence(p, prior).passed


def test_internal_privacy_audit_measures_epsilon():
    alg = build_m3(rr_two_server(1), 3).algorithm()
    rep = au.audit_internal_privacy(alg, 2 * LN2, 0)
    assert rep.passed
    # a stand-in input moves both the recorded coin and its second message by a factor 2
    assert math.isclose(rep.measured["measured_epsilon"], math.log(4), abs_tol=1e-8)
    bad = build_m3(rr_two_server(1), 3, options=SamplerOptions(erase=False)).algorithm()
    assert au.audit_internal_privacy(bad, 7 * LN2, 0).verdict == au.VIOLATED


def test_reduction_audit():
    rep = au.audit_reduction(shares_toy3())
    assert rep.passed and rep.measured["grouping"] == [[1, 2], [3]]


def test_geometric_tail_audit_rejects_rates_below_floor():
    assert au.audit_geo_tail(5, 0.2, 0.05, trials=2000, seed=3).passed
    with pytest.raises(ValueError):
        au.audit_geo_tail(2, 0.2, 0.05, rates=[0.1, 0.3])


def test_counting_audits():
    params = CountingParams.from_budget(3, 1, 0.01)
    assert au.audit_counting_error(12, 1).measured["quantile_90"] == 3
    assert au.audit_counting_unbiased(params, [1, 0, 1], trials=20_000).passed
    assert au.audit_counting_robustness(params, [1, 0, 1], trials=2000).passed
    assert au.audit_counting_privacy(params, full=False).passed
    assert not au.audit_counting_privacy(CountingParams(3, 2, 1, 0.01, 0.5), full=False).passed
