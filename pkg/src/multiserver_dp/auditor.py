"""Audits that bind each claimed property to exact or Monte-Carlo evidence.

Every audit returns an :class:`AuditReport`.  Exact audits carry no
statistical uncertainty; Monte-Carlo audits record their trial count and
confidence level.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

import numpy as np

from .counting import (
    CountingParams,
    counting_protocol,
    dt_pmf,
    error_quantile,
    expected_output,
    simulate_counting,
)
from .online import OnlineAlgorithm, check_internal_privacy, run_online, stream_output_distribution
from .prob import (
    EnumerationLimitError,
    FiniteDist,
    align,
    check_closeness,
    exp_exact,
    exp_lower,
    make_rng,
    posterior,
    sample,
    statistical_distance,
)
from .protocol import (
    Protocol,
    attacks_up_to,
    check_protocol_dp,
    execute,
    output_distribution,
    output_distribution_under,
    view_distribution,
)
from .transform import (
    BUDGET_EXHAUSTED,
    CompiledProtocol,
    RejectionSampler,
    SamplerOptions,
    TwoServerParts,
    build_m1,
    build_m2,
    reduce_k_to_2,
    tail_sample_count,
)

EXACT, MONTE_CARLO = "exact", "monte-carlo"
PASS, VIOLATED, INCONCLUSIVE = "pass", "violated", "inconclusive"

STATEMENTS = {
    "resampling-equivalence": "posterior re-sampling leaves the output law under the prior unchanged",
    "posterior-correctness": "an accepted stand-in input is distributed as the posterior given the first message",
    "acceptance-rates": "every rate lies in (0, 1/2]; every mixture acceptance probability lies in [1/(2e^(2eps)), 1/2]",
    "transform-distance": "SD(protocol output under D^n, online output under D^m) <= n*delta + beta",
    "internal-privacy": "every intrusion snapshot is (7eps, 3e^(5eps)delta)-close across neighbouring streams",
    "internal-privacy-first-batch": "snapshots taken during the first n steps are 2eps-close",
    "reduction-fidelity": "the two-server reduction has the same output law and projects every view",
    "geometric-tail": "a sum of n geometric waiting times with rates >= ell exceeds v with probability <= beta",
    "protocol-dp": "the protocol is (eps, delta)-DP against every coalition with at most c servers",
    "counting-unbiased": "honest counting output has mean equal to the number of ones",
    "counting-error-quantile": "the 90th percentile of |alpha_1 + alpha_2 - t| is at most 10/eps",
    "counting-privacy": "each noisy value is (eps/2, delta/2)-close under a bit flip; the pair is (eps, delta)-close",
    "counting-robustness": "a malicious user moves the expected count by at most 2(t+1); out-of-range messages by 0",
}


@dataclass
class AuditReport:
    claim: str
    mode: str
    parameters: dict
    verdict: str
    measured: dict = field(default_factory=dict)
    witness: dict | None = None
    slack: Any = None
    confidence: float | None = None
    trials: int | None = None
    notes: list = field(default_factory=list)

    @property
    def statement(self) -> str:
        return STATEMENTS.get(self.claim, "")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def line(self) -> str:
        extra = ", ".join(f"{k}={_short(v)}" for k, v in self.measured.items())
        return f"[{self.verdict.upper():>9}] {self.claim} ({self.mode}) {extra}"

    def to_dict(self) -> dict:
        return jsonable({
            "claim": self.claim, "statement": self.statement, "mode": self.mode,
            "parameters": self.parameters, "verdict": self.verdict, "measured": self.measured,
            "witness": self.witness, "slack": self.slack, "confidence": self.confidence,
            "trials": self.trials, "notes": self.notes,
        })


def _short(v):
    if isinstance(v, Fraction):
        return f"{float(v):.6g}"
    if isinstance(v, float):
        return f"{v:.6g}"
    return v


def jsonable(obj):
    """Fractions become ``"a/b"`` strings; tuples and sets become lists."""
    if isinstance(obj, Fraction):
        return str(obj)
    if obj is BUDGET_EXHAUSTED:
        return repr(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = [jsonable(v) for v in obj]
        return sorted(items, key=repr) if isinstance(obj, (set, frozenset)) else items
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    return repr(obj)


def _verdict(ok: bool) -> str:
    return PASS if ok else VIOLATED


# ---------------------------------------------------------------------------
# empirical epsilon

def empirical_epsilon(p: FiniteDist, q: FiniteDist, delta, tol: float = 1e-9) -> float:
    """Smallest ``eps`` (to ``tol``) at which ``p`` and ``q`` are ``(eps, delta)``-close.

    Infinite when the mass on labels the other side cannot produce already
    exceeds ``delta``.
    """
    p, q = align(p, q)
    if not check_closeness(p, q, math.inf, delta).satisfied:
        return math.inf
    if check_closeness(p, q, 0, delta).satisfied:
        return 0.0
    ratios = [abs(math.log(float(a) / float(q.prob(e)))) for e, a in p.items() if a and q.prob(e)]
    hi = max(ratios, default=0.0) + tol
    while not check_closeness(p, q, hi, delta).satisfied:
        hi = 2 * hi + tol
    lo = 0.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if check_closeness(p, q, mid, delta).satisfied:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# privacy audits

def _cell_witness(cell) -> dict:
    rep = cell.report
    return {"position": cell.position, "time": cell.t, "x": cell.x, "x_prime": cell.x_prime,
            "delta_measured": rep.worst_delta, "event_size": len(rep.witness_event)}


def audit_internal_privacy(alg: OnlineAlgorithm, epsilon_claim, delta_claim, claim: str = "internal-privacy",
                           times: Iterable[int] | None = None, positions: Iterable[int] | None = None,
                           measure_epsilon: bool = True, ceiling: int | None = None) -> AuditReport:
    times = sorted(times) if times is not None else None
    positions = sorted(positions) if positions is not None else None
    kwargs = {"times": times, "positions": positions}
    if ceiling is not None:
        kwargs["ceiling"] = ceiling
    params = {"epsilon": epsilon_claim, "delta": delta_claim, "stream_length": alg.length,
              "times": times if times is not None else "all",
              "positions": positions if positions is not None else "all"}
    try:
        rep = check_internal_privacy(alg, epsilon_claim, delta_claim, keep_laws=measure_epsilon, **kwargs)
    except EnumerationLimitError as exc:
        return AuditReport(claim, EXACT, params, INCONCLUSIVE, notes=[str(exc)])
    measured = {"cells": len(rep.cells), "max_delta_at_claimed_epsilon": rep.max_delta}
    slack = delta_claim - rep.max_delta
    if measure_epsilon and rep.cells:
        eps_seen, where = 0.0, None
        for cell in rep.cells:
            e = empirical_epsilon(*cell.laws, delta_claim)
            if e > eps_seen:
                eps_seen, where = e, cell
        measured["measured_epsilon"] = eps_seen
        measured["epsilon_slack"] = float(epsilon_claim) - eps_seen
        if where is not None:
            measured["measured_epsilon_at"] = {"position": where.position, "time": where.t}
    witness = _cell_witness(rep.worst) if rep.worst is not None else None
    return AuditReport(claim, EXACT, params, _verdict(rep.satisfied), measured, witness, slack)


def audit_protocol_dp(p: Protocol, c: int, epsilon, delta, claim: str = "protocol-dp",
                      ceiling: int | None = None) -> AuditReport:
    params = {"protocol": p.name, "users": p.n, "servers": p.k, "max_corrupt_servers": c,
              "epsilon": epsilon, "delta": delta}
    try:
        rep = check_protocol_dp(p, c, epsilon, delta, **({"ceiling": ceiling} if ceiling else {}))
    except EnumerationLimitError as exc:
        return AuditReport(claim, EXACT, params, INCONCLUSIVE, notes=[str(exc)])
    witness = None
    if rep.worst is not None:
        w = rep.worst
        witness = {"attack": w.attack.describe(), "index": w.index, "x": w.x, "x_prime": w.x_prime,
                   "delta_measured": w.report.worst_delta}
    return AuditReport(claim, EXACT, params, _verdict(rep.satisfied),
                       {"cells": rep.cells_checked, "max_delta": rep.max_delta}, witness, delta - rep.max_delta)


# ---------------------------------------------------------------------------
# transform audits

def audit_resampling_equivalence(p: Protocol, prior: FiniteDist, purified: list | None = None) -> AuditReport:
    m1 = build_m1(p, purified).output_distribution_under(prior)
    m2 = build_m2(p, prior, purified).output_distribution_under()
    sd = statistical_distance(*align(m1, m2))
    return AuditReport("resampling-equivalence", EXACT, {"protocol": p.name, "users": p.n},
                       _verdict(sd == 0), {"sd": sd}, slack=-sd)


def audit_posterior(parts: TwoServerParts, prior: FiniteDist, options: SamplerOptions = SamplerOptions()) -> AuditReport:
    sampler = RejectionSampler(parts, parts.n, options)
    checked, bad = 0, []
    for i in range(1, parts.n + 1):
        for y in parts.reachable_messages(i):
            if sampler.acceptance_probability(i, y, prior) == 0:
                continue
            accepted = sampler.accepted_sample_distribution(i, y, prior)
            post = posterior(prior, lambda x: parts.first_law(i, x), y)
            checked += 1
            if statistical_distance(*align(accepted, post)) != 0:
                bad.append({"user": i, "message": y})
    return AuditReport("posterior-correctness", EXACT, {"protocol": parts.protocol.name},
                       _verdict(not bad), {"pairs_checked": checked, "mismatches": len(bad)},
                       bad[0] if bad else None)


def acceptance_floor_bound(epsilon) -> Fraction:
    """A rational number no larger than ``1 / (2 e^{2 eps})``."""
    exact = exp_exact(2 * epsilon)
    if exact is not None:
        return Fraction(1, 2) / exact
    return Fraction(1, 2) / (exp_lower(2 * float(epsilon)) + Fraction(1, 2 ** 100))


def audit_accept_rates(parts: TwoServerParts, prior: FiniteDist, epsilon,
                       options: SamplerOptions = SamplerOptions(), name: str = "") -> AuditReport:
    floor = acceptance_floor_bound(epsilon)
    rates, mixtures, bad = [], [], None
    for i in range(1, parts.n + 1):
        for y in parts.reachable_messages(i):
            mix = 0
            for x, w in prior.items():
                r = parts.rate(i, y, x, normalized=options.normalize_rate)
                rates.append(r)
                mix += w * r
                if not 0 < r <= Fraction(1, 2) and bad is None:
                    bad = {"user": i, "message": y, "input": x, "rate": r}
            mixtures.append(mix)
            if not floor <= mix <= Fraction(1, 2) and bad is None:
                bad = {"user": i, "message": y, "mixture": mix}
    measured = {"min_rate": min(rates, default=None), "max_rate": max(rates, default=None),
                "min_mixture": min(mixtures, default=None), "max_mixture": max(mixtures, default=None),
                "floor": floor}
    return AuditReport("acceptance-rates", EXACT, {"protocol": name or parts.protocol.name, "epsilon": epsilon},
                       _verdict(bad is None), measured, bad)


def _plugin_sd(a: np.ndarray, b: np.ndarray, k: int) -> float:
    pa = np.bincount(a, minlength=k) / len(a)
    pb = np.bincount(b, minlength=k) / len(b)
    return 0.5 * float(np.abs(pa - pb).sum())


def bootstrap_sd(a_labels: Sequence, b_labels: Sequence, rng: np.random.Generator,
                 resamples: int = 1000, level: float = 0.99) -> tuple[float, float, float]:
    """Plug-in SD between two samples with a percentile bootstrap interval."""
    index = {lbl: c for c, lbl in enumerate(dict.fromkeys(list(a_labels) + list(b_labels)))}
    a = np.array([index[v] for v in a_labels])
    b = np.array([index[v] for v in b_labels])
    k = len(index)
    est = _plugin_sd(a, b, k)
    boots = np.empty(resamples)
    for r in range(resamples):
        boots[r] = _plugin_sd(a[rng.integers(0, len(a), len(a))], b[rng.integers(0, len(b), len(b))], k)
    tail = (1 - level) / 2
    return est, float(np.quantile(boots, tail)), float(np.quantile(boots, 1 - tail))


def audit_transform_distance(compiled: CompiledProtocol, prior: FiniteDist, mode: str = EXACT,
                             trials: int = 2000, seed=0, ceiling: int | None = None) -> AuditReport:
    p = compiled.source
    n, beta, delta = p.n, compiled.budget.beta, compiled.delta
    bound = n * delta + beta
    params = {"protocol": p.name, "users": n, "beta": beta, "delta": delta,
              "stream_length": compiled.sampler.m, "bound": bound}
    notes = []
    if mode == EXACT:
        try:
            kw = {"ceiling": ceiling} if ceiling else {}
            ref = output_distribution_under(p, prior, **kw)
            got = stream_output_distribution(compiled.sampler.compact().algorithm(), prior, **kw)
            sd = statistical_distance(*align(ref, got))
            measured = {"sd": sd, "budget_exhausted_mass": got.prob(BUDGET_EXHAUSTED)}
            return AuditReport("transform-distance", EXACT, params, _verdict(sd <= bound), measured,
                               slack=bound - sd)
        except EnumerationLimitError as exc:
            notes.append(f"exact enumeration too large ({exc}); fell back to Monte-Carlo")
    rng = make_rng(seed)
    alg = compiled.sampler.compact().algorithm()
    ref_samples, got_samples = [], []
    for _ in range(trials):
        xs = tuple(sample(prior, rng) for _ in range(n))
        ref_samples.append(execute(p, xs, rng).output)
        stream = tuple(sample(prior, rng) for _ in range(alg.length))
        got_samples.append(run_online(alg, stream, rng)[0])
    est, lo, hi = bootstrap_sd(ref_samples, got_samples, rng)
    exhausted = sum(1 for z in got_samples if z is BUDGET_EXHAUSTED) / trials
    measured = {"sd": est, "ci_low": lo, "ci_high": hi, "budget_exhausted_rate": exhausted}
    return AuditReport("transform-distance", MONTE_CARLO, params, _verdict(lo <= float(bound)), measured,
                       slack=float(bound) - est, confidence=0.99, trials=trials, notes=notes)


def audit_reduction(p: Protocol, max_corrupt: int = 1) -> AuditReport:
    red = reduce_k_to_2(p)
    dom = p.input_domain
    inputs = list(itertools.product(dom.elements, repeat=p.n)) if dom is not None else [()]
    worst_out, views, bad = 0, 0, None
    for xs in inputs:
        sd = statistical_distance(*align(output_distribution(p, xs), output_distribution(red.protocol, xs)))
        worst_out = max(worst_out, sd)
        if sd and bad is None:
            bad = {"x": xs, "output_sd": sd}
        for attack in attacks_up_to(red.protocol, max_corrupt):
            reduced = view_distribution(red.protocol, attack, xs)
            projected = view_distribution(p, red.map_attack(attack), xs).map(red.project_view)
            vsd = statistical_distance(*align(reduced, projected))
            views += 1
            if vsd and bad is None:
                bad = {"x": xs, "attack": attack.describe(), "view_sd": vsd}
    measured = {"inputs": len(inputs), "views_compared": views, "max_output_sd": worst_out,
                "grouping": [list(g) for g in red.grouping]}
    return AuditReport("reduction-fidelity", EXACT, {"protocol": p.name, "servers": p.k},
                       _verdict(bad is None), measured, bad)


# ---------------------------------------------------------------------------
# geometric tail

def audit_geo_tail(n: int, ell, beta, trials: int = 10_000, seed=0, rates: Sequence | None = None) -> AuditReport:
    """Monte-Carlo exceedance of the budget by a sum of geometric waiting times.

    ``rates`` defaults to ``ell`` for every user (the slowest admissible case).
    """
    rates = np.full(n, float(ell)) if rates is None else np.asarray(rates, dtype=float)
    if rates.size and (rates.min() < float(ell) - 1e-15 or rates.max() > 0.5 + 1e-15):
        raise ValueError("rates must lie in [ell, 1/2]")
    v = tail_sample_count(n, ell, beta)
    rng = make_rng(seed)
    totals = rng.geometric(rates, size=(trials, n)).sum(axis=1) if n else np.zeros(trials, dtype=int)
    freq = float(np.mean(totals > v))
    margin = 3 * math.sqrt(beta * (1 - beta) / trials)
    measured = {"v": v, "exceedance": freq, "mean_total": float(totals.mean()), "allowed": beta + margin}
    return AuditReport("geometric-tail", MONTE_CARLO, {"n": n, "ell": ell, "beta": beta},
                       _verdict(freq <= beta + margin), measured, slack=beta + margin - freq,
                       confidence=0.997, trials=trials)


# ---------------------------------------------------------------------------
# counting audits

def audit_counting_unbiased(params: CountingParams, xs: Sequence[int], trials: int = 100_000, seed=0) -> AuditReport:
    z = simulate_counting(params, xs, trials, make_rng(seed))
    target = sum(xs)
    mean, sd = float(z.mean()), float(z.std(ddof=1))
    allowed = 3 * sd / math.sqrt(trials)
    exact_mean = expected_output(params, xs)
    measured = {"mean": mean, "target": target, "allowed_deviation": allowed, "exact_mean": exact_mean}
    ok = abs(mean - target) <= allowed and exact_mean == target
    return AuditReport("counting-unbiased", MONTE_CARLO, {"n": params.n, "t": params.t, "epsilon": params.epsilon},
                       _verdict(ok), measured, slack=allowed - abs(mean - target), confidence=0.997, trials=trials)


def audit_counting_error(t: int, epsilon, constant=10) -> AuditReport:
    q90 = error_quantile(t, epsilon)
    bound = constant / float(epsilon)
    return AuditReport("counting-error-quantile", EXACT, {"t": t, "epsilon": epsilon, "constant": constant},
                       _verdict(q90 <= bound), {"quantile_90": q90, "bound": bound,
                                                 "reference_constant": q90 * float(epsilon)},
                       slack=bound - q90)


def audit_counting_privacy(params: CountingParams, full: bool = True) -> AuditReport:
    """Per-value and two-value closeness of the noise, then (optionally) the
    full exhaustive protocol check against one corrupted server."""
    pmf = dt_pmf(params.t, params.noise_epsilon)
    shifted = pmf.relabel(lambda v: v + 1)
    single = check_closeness(*align(pmf, shifted), params.epsilon / 2, params.delta / 2)
    pair0 = pmf.product(pmf)
    pair1 = pair0.relabel(lambda ab: (ab[0] + 1, ab[1] + 1))
    double = check_closeness(*align(pair0, pair1), params.epsilon, params.delta)
    measured = {"single_value_delta": single.worst_delta, "two_value_delta": double.worst_delta}
    ok = single.satisfied and double.satisfied
    witness = None
    if full:
        rep = audit_protocol_dp(counting_protocol(params), 1, params.epsilon, params.delta, claim="counting-privacy")
        measured["protocol_cells"] = rep.measured.get("cells")
        measured["protocol_max_delta"] = rep.measured.get("max_delta")
        witness = rep.witness
        ok = ok and rep.passed
        if rep.verdict == INCONCLUSIVE:
            return AuditReport("counting-privacy", EXACT, {"n": params.n, "t": params.t}, INCONCLUSIVE,
                               measured, notes=rep.notes)
    params_d = {"n": params.n, "t": params.t, "epsilon": params.epsilon, "delta": params.delta,
                "noise_epsilon": params.noise_epsilon}
    return AuditReport("counting-privacy", EXACT, params_d, _verdict(ok), measured, witness)


def audit_counting_robustness(params: CountingParams, xs: Sequence[int], trials: int = 20_000, seed=0) -> AuditReport:
    """User 1 misbehaves.  Measures the exact expected shift for extreme in-range
    messages and for out-of-range messages, plus a Monte-Carlo confirmation."""
    honest = sum(xs[1:])
    extreme = {1: (params.hi, params.lo)}
    wild = {1: (10 ** 9, -10 ** 9)}
    bias_extreme = expected_output(params, xs, extreme) - honest
    bias_wild = expected_output(params, xs, wild) - honest
    mc = simulate_counting(params, xs, trials, make_rng(seed), extreme)
    cap = 2 * (params.t + 1)
    measured = {"bias_extreme": bias_extreme, "bias_out_of_range": bias_wild, "cap": cap,
                "mc_bias_extreme": float(mc.mean()) - honest}
    ok = abs(bias_extreme) <= cap and bias_wild == 0
    return AuditReport("counting-robustness", EXACT, {"n": params.n, "t": params.t}, _verdict(ok), measured,
                       slack=cap - abs(bias_extreme))
