"""The twelve acceptance criteria, each at its stated tolerance.

Every test records a one-line verdict; the lines are printed in a dedicated
section at the end of the pytest run (and directly when this file is run as a
script).
"""
import math
import time
from fractions import Fraction

import pytest

from conftest import ACCEPTANCE_LINES
from multiserver_dp import auditor as au
from multiserver_dp.cli import AuditSession
from multiserver_dp.config import builtin_names, load_builtin
from multiserver_dp.counting import CountingParams, counting_protocol
from multiserver_dp.prob import align, statistical_distance
from multiserver_dp.protocol import check_protocol_dp, output_distribution
from multiserver_dp.transform import build_m1, build_m2, reduce_k_to_2, tail_sample_count


class Criterion:
    def __init__(self, number: int, title: str, key=None):
        self.number, self.title = number, title
        self.key = number if key is None else key

    def __enter__(self):
        self.start = time.perf_counter()
        self.detail = ""
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        verdict = "PASS" if exc_type is None else "FAIL"
        line = f"[{verdict}] {self.number:>2}. {self.title} ({elapsed:.1f}s) {self.detail}".rstrip()
        ACCEPTANCE_LINES[self.key] = line
        print(line)
        return False


def test_01_resampling_hybrid_equals_hybrid():
    with Criterion(1, "posterior re-sampling leaves the output law unchanged") as c:
        cfg = load_builtin("rr-two-server")
        m1 = build_m1(cfg.protocol).output_distribution_under(cfg.prior)
        m2 = build_m2(cfg.protocol, cfg.prior).output_distribution_under()
        sd = statistical_distance(*align(m1, m2))
        c.detail = f"SD={sd}"
        assert sd == 0


def test_02_rejection_sampler_draws_from_the_posterior():
    with Criterion(2, "accepted stand-in inputs follow the posterior") as c:
        rep = AuditSession(load_builtin("rr-two-server")).run_one("posterior-correctness")
        c.detail = f"pairs={rep.measured['pairs_checked']} mismatches={rep.measured['mismatches']}"
        assert rep.passed and rep.measured["pairs_checked"] > 0


def test_03_acceptance_rates_in_range_for_every_builtin():
    with Criterion(3, "acceptance rates in (0, 1/2], mixtures in [1/(2e^2eps), 1/2]") as c:
        lows = []
        for name in builtin_names():
            rep = AuditSession(load_builtin(name)).run_one("acceptance-rates")
            assert rep.passed, (name, rep.witness)
            lows.append(f"{name}:{float(rep.measured['min_mixture']):.3g}")
        c.detail = "min mixture " + " ".join(lows)


def test_04_transform_distance_within_beta():
    with Criterion(4, "SD(protocol, compiled algorithm) <= n*delta + beta") as c:
        cfg = load_builtin("rr-two-server-n1")
        assert cfg.protocol.n == 1 and cfg.delta == 0 and cfg.beta == Fraction(1, 10)
        rep = AuditSession(cfg).run_one("transform-distance")
        sd, exhausted = rep.measured["sd"], rep.measured["budget_exhausted_mass"]
        c.detail = f"m={rep.parameters['stream_length']} SD={float(sd):.3g} exhausted-mass={float(exhausted):.3g}"
        assert rep.mode == au.EXACT
        assert sd <= Fraction(1, 10)


@pytest.mark.parametrize("name", ["rr-two-server-n1", "rr-two-server"])
def test_05_internal_privacy(name):
    key = 5.1 if name == "rr-two-server" else 5
    with Criterion(5, f"internal privacy of the compiled algorithm [{name}]", key) as c:
        session = AuditSession(load_builtin(name))
        first = session.run_one("internal-privacy-first-batch")
        full = session.run_one("internal-privacy")
        c.detail = (f"first-batch eps={first.measured['measured_epsilon']:.4f} (claim 2eps) "
                    f"all eps={full.measured['measured_epsilon']:.4f} (claim 7eps) "
                    f"slack={full.measured['epsilon_slack']:.4f}")
        assert first.passed and full.passed


def test_06_reduction_preserves_outputs():
    with Criterion(6, "three-server toy equals its two-server reduction") as c:
        cfg = load_builtin("reduction-toy3")
        p = cfg.protocol
        red = reduce_k_to_2(p).protocol
        worst = 0
        inputs = [(a, b) for a in (0, 1) for b in (0, 1)]
        for xs in inputs:
            worst = max(worst, statistical_distance(*align(output_distribution(p, xs), output_distribution(red, xs))))
        c.detail = f"inputs={len(inputs)} max SD={worst}"
        assert worst == 0


def test_07_geometric_tail():
    with Criterion(7, "geometric waiting times stay under the budget") as c:
        n, ell, beta, trials = 10, 0.2, 0.05, 10_000
        rep = au.audit_geo_tail(n, ell, beta, trials, seed=2024)
        allowed = beta + 3 * math.sqrt(beta * (1 - beta) / trials)
        c.detail = f"v={rep.measured['v']} exceedance={rep.measured['exceedance']:.4f} allowed={allowed:.4f}"
        assert rep.measured["v"] == tail_sample_count(n, ell, beta)
        assert rep.measured["exceedance"] <= allowed


def test_08_counting_is_unbiased():
    with Criterion(8, "counting output is unbiased") as c:
        cfg = load_builtin("counting-n20")
        params = CountingParams.from_budget(20, 1, 0.01)
        rep = au.audit_counting_unbiased(params, list(cfg.input_vector), trials=100_000, seed=cfg.seed)
        m = rep.measured
        c.detail = f"t={params.t} |mean-count|={abs(m['mean'] - m['target']):.4f} allowed={m['allowed_deviation']:.4f}"
        assert abs(m["mean"] - m["target"]) <= m["allowed_deviation"]


def test_09_counting_error_quantile():
    with Criterion(9, "90th percentile of the noise error <= 10/eps") as c:
        rep = au.audit_counting_error(12, 1)
        c.detail = f"quantile={rep.measured['quantile_90']} bound={rep.measured['bound']:g}"
        assert rep.passed


def test_10_counting_privacy():
    with Criterion(10, "counting is private against one server; t=2 is not") as c:
        params = CountingParams.from_budget(2, 1, 0.01)
        rep = au.audit_counting_privacy(params, full=True)
        weak = CountingParams(2, 2, 1, 0.01, 0.5)
        control = check_protocol_dp(counting_protocol(weak), 1, 1, 0.01)
        c.detail = (f"t={params.t} max delta={float(rep.measured['protocol_max_delta']):.3g} "
                    f"cells={rep.measured['protocol_cells']}; t=2 delta={float(control.max_delta):.3g}")
        assert rep.passed
        assert not control.satisfied


def test_11_counting_robustness():
    with Criterion(11, "one malicious user has bounded influence") as c:
        params = CountingParams.from_budget(20, 1, 0.01)
        cfg = load_builtin("counting-n20")
        rep = au.audit_counting_robustness(params, list(cfg.input_vector), seed=cfg.seed)
        m = rep.measured
        c.detail = f"bias={m['bias_extreme']} cap={m['cap']} out-of-range bias={m['bias_out_of_range']}"
        assert abs(m["bias_extreme"]) <= 2 * (params.t + 1)
        assert m["bias_out_of_range"] == 0


def test_12_mutants_are_caught():
    with Criterion(12, "every shipped mutant is flagged") as c:
        cfg = load_builtin("rr-two-server")
        seen = []
        for mutant in ("erasure", "rate", "clear-text"):
            reports = AuditSession(cfg, mutant=mutant).run()
            assert reports and all(r.verdict == au.VIOLATED for r in reports), mutant
            seen.append(f"{mutant}->{reports[0].claim}")
        c.detail = " ".join(seen)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
