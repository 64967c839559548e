"""Command-line entry point: run, transform, audit, report and counting.

Reports are JSON documents with sorted keys, so a fixed configuration and seed
always produce byte-identical output.  Exit status is 0 when every audit
passes, 1 when any audit is violated and 2 on configuration errors.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import auditor as au
from . import combinators as cb
from .config import ConfigError, ScenarioConfig, builtin_names, counting_params, format_number, load_builtin, load_config
from .counting import CountingParams, expected_output, simulate_counting
from .prob import make_rng
from .protocol import Protocol, execute
from .transform import SamplerOptions, transform_protocol

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2

MUTANTS = {
    # mutant -> (sampler options, audit it must break)
    "erasure": (SamplerOptions(erase=False), "internal-privacy"),
    "rate": (SamplerOptions(normalize_rate=False), "acceptance-rates"),
    "clear-text": (SamplerOptions(), "protocol-dp"),
}

TRANSFORM_AUDITS = {"resampling-equivalence", "posterior-correctness", "acceptance-rates", "transform-distance",
                    "internal-privacy", "internal-privacy-first-batch", "geometric-tail"}
COUNTING_AUDITS = {"counting-unbiased", "counting-error-quantile", "counting-privacy", "counting-robustness"}
KNOWN_AUDITS = TRANSFORM_AUDITS | COUNTING_AUDITS | {"protocol-dp", "reduction-fidelity"}


def clear_text_like(p: Protocol) -> Protocol:
    """Same shape as ``p`` but every user sends the raw input to every server."""
    r = cb.clear_randomizer(p.input_domain.elements, p.k)
    return Protocol((r,) * p.n, tuple(cb.sum_server() for _ in range(p.k)), p.dag, name=f"{p.name}/clear-text")


class AuditSession:
    """Binds a scenario (plus an optional mutant) to the audit functions."""

    def __init__(self, config: ScenarioConfig, mode: str = au.EXACT, mutant: str | None = None,
                 trials: int | None = None, seed: int | None = None, ceiling: int | None = None):
        if mutant is not None and mutant not in MUTANTS:
            raise ConfigError(f"mutant: unknown mutant {mutant!r} (choose from {sorted(MUTANTS)})")
        if mode not in (au.EXACT, au.MONTE_CARLO):
            raise ConfigError(f"mode: expected 'exact' or 'monte-carlo', got {mode!r}")
        self.config = config
        self.mode = mode
        self.mutant = mutant
        self.trials = trials if trials is not None else config.trials
        self.seed = seed if seed is not None else config.seed
        self.ceiling = ceiling if ceiling is not None else config.ceiling
        self.options = MUTANTS[mutant][0] if mutant else SamplerOptions()
        self.protocol = clear_text_like(config.protocol) if mutant == "clear-text" else config.protocol
        self._compiled = {}

    def selection(self) -> list:
        # a mutant run checks only the claim the mutant is built to break
        chosen = [MUTANTS[self.mutant][1]] if self.mutant else list(self.config.audits)
        unknown = [a for a in chosen if a not in KNOWN_AUDITS]
        if unknown:
            raise ConfigError(f"audits: unknown claim {unknown[0]!r} (choose from {sorted(KNOWN_AUDITS)})")
        return chosen

    def compiled(self, stream_length: int | None = None):
        if stream_length not in self._compiled:
            c = self.config
            self._compiled[stream_length] = transform_protocol(self.protocol, c.epsilon, c.delta, c.beta,
                                                               stream_length, self.options)
        return self._compiled[stream_length]

    def _counting(self) -> CountingParams:
        if self.config.protocol_tree.get("kind") != "counting":
            raise ConfigError("audits: counting claims need a protocol of kind 'counting'")
        return counting_params(self.config.protocol_tree)

    def run_one(self, claim: str) -> au.AuditReport:
        c = self.config
        if claim == "protocol-dp":
            return au.audit_protocol_dp(self.protocol, c.max_corrupt_servers, c.epsilon, c.delta,
                                        ceiling=self.ceiling)
        if claim == "reduction-fidelity":
            return au.audit_reduction(self.protocol)
        if claim in COUNTING_AUDITS:
            return self._run_counting(claim)
        short = self.compiled(self.protocol.n + c.privacy_stream_extra)
        if claim == "resampling-equivalence":
            return au.audit_resampling_equivalence(short.reduction.protocol, c.prior, short.purified)
        if claim == "posterior-correctness":
            return au.audit_posterior(short.parts, c.prior, self.options)
        if claim == "acceptance-rates":
            return au.audit_accept_rates(short.parts, c.prior, c.epsilon, self.options, name=self.protocol.name)
        if claim == "geometric-tail":
            b = short.budget
            return au.audit_geo_tail(b.n, b.ell, float(c.beta), self.trials, self.seed)
        if claim == "transform-distance":
            return au.audit_transform_distance(self.compiled(), c.prior, self.mode, self.trials, self.seed,
                                               self.ceiling)
        if claim == "internal-privacy":
            eps, delta = short.target_privacy()
            return au.audit_internal_privacy(short.algorithm, eps, delta, ceiling=self.ceiling)
        if claim == "internal-privacy-first-batch":
            times = range(0, self.protocol.n + 1)
            return au.audit_internal_privacy(short.algorithm, 2 * c.epsilon, 0, claim=claim,
                                             times=times, ceiling=self.ceiling)
        raise ConfigError(f"audits: unknown claim {claim!r}")

    def _run_counting(self, claim: str) -> au.AuditReport:
        params = self._counting()
        xs = list(self.config.input_vector)
        if claim == "counting-unbiased":
            return au.audit_counting_unbiased(params, xs, self.trials, self.seed)
        if claim == "counting-error-quantile":
            return au.audit_counting_error(params.t, params.noise_epsilon)
        if claim == "counting-privacy":
            rep = au.audit_counting_privacy(params, full=self.mode == au.EXACT)
            if self.mode != au.EXACT:
                rep.notes.append("exhaustive protocol check skipped in monte-carlo mode")
            return rep
        return au.audit_counting_robustness(params, xs, self.trials, self.seed)

    def run(self) -> list:
        return [self.run_one(claim) for claim in self.selection()]


def _header(config: ScenarioConfig, args) -> dict:
    return {"scenario": config.name, "epsilon": format_number(config.epsilon),
            "delta": format_number(config.delta), "beta": format_number(config.beta),
            "seed": args.seed if args.seed is not None else config.seed}


def audit_document(config: ScenarioConfig, reports: list, args) -> dict:
    counts = {v: sum(r.verdict == v for r in reports) for v in (au.PASS, au.VIOLATED, au.INCONCLUSIVE)}
    return {**_header(config, args), "mode": args.mode, "mutant": args.mutant,
            "audits": [r.to_dict() for r in reports], "summary": counts,
            "all_passed": counts[au.VIOLATED] == 0}


# ---------------------------------------------------------------------------
# subcommands

def cmd_run(config: ScenarioConfig, args) -> tuple[dict, int]:
    p = config.protocol
    xs = config.input_vector
    trials = args.trials if args.trials is not None else config.trials
    rng = make_rng(args.seed if args.seed is not None else config.seed)
    outputs = [execute(p, xs, rng).output for _ in range(trials)]
    summary = {"trials": trials}
    if outputs and all(isinstance(z, (int, np.integer)) for z in outputs):
        arr = np.asarray(outputs, dtype=float)
        summary.update(mean=float(arr.mean()), sd=float(arr.std(ddof=1)) if trials > 1 else 0.0,
                       min=int(arr.min()), max=int(arr.max()))
    if config.protocol_tree.get("kind") == "counting":
        summary["true_count"] = sum(xs)
    doc = {**_header(config, args), "protocol": p.name, "inputs": list(xs),
           "outputs": au.jsonable(outputs), "summary": summary}
    return doc, EXIT_OK


def cmd_transform(config: ScenarioConfig, args) -> tuple[dict, int]:
    session = AuditSession(config, mutant=args.mutant)
    compiled = session.compiled()
    desc = compiled.describe()
    if all(any("skipped" in n for n in pr.notes) for pr in compiled.purified):
        desc["purification"] = "skipped"
    b = compiled.budget
    target_eps, target_delta = compiled.target_privacy()
    doc = {**_header(config, args), "algorithm": desc,
           "budget": {"n": b.n, "epsilon": format_number(b.epsilon), "beta": format_number(b.beta),
                      "ell": format_number(b.ell), "v": b.v, "m": b.m},
           "internal_privacy_target": {"epsilon": format_number(target_eps),
                                       "delta": format_number(target_delta)}}
    return au.jsonable(doc), EXIT_OK


def cmd_audit(config: ScenarioConfig, args) -> tuple[dict, int]:
    mode = au.MONTE_CARLO if args.mode == "mc" else au.EXACT
    session = AuditSession(config, mode, args.mutant, args.trials, args.seed, args.ceiling)
    reports = session.run()
    for r in reports:
        print(r.line(), file=sys.stderr)
    doc = audit_document(config, reports, args)
    return doc, EXIT_OK if doc["all_passed"] else EXIT_VIOLATION


def cmd_report(args) -> tuple[dict, int]:
    try:
        doc = json.loads(Path(args.input).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"input: cannot read report ({exc})") from None
    entries = doc.get("audits")
    if not isinstance(entries, list):
        raise ConfigError("input: not an audit report (no 'audits' list)")
    violated = False
    for e in entries:
        measured = ", ".join(f"{k}={v}" for k, v in sorted(e.get("measured", {}).items()))
        print(f"{e.get('verdict', '?'):>12}  {e.get('claim')}  [{e.get('mode')}]  {measured}")
        violated |= e.get("verdict") == au.VIOLATED
    return None, EXIT_VIOLATION if violated else EXIT_OK


def _parse_malicious(items) -> dict:
    out = {}
    for item in items or []:
        try:
            who, msgs = item.split(":")
            a, b = msgs.split(",")
            out[int(who)] = (int(a), int(b))
        except ValueError:
            raise ConfigError(f"malicious: expected INDEX:Y1,Y2, got {item!r}") from None
    return out


def cmd_counting(args) -> tuple[dict, int]:
    if not 0 <= args.ones <= args.n:
        raise ConfigError(f"ones: must lie in [0, {args.n}]")
    try:
        params = CountingParams.from_budget(args.n, args.epsilon, args.delta)
        if args.t is not None:
            params = replace(params, t=args.t)
    except ValueError as exc:
        raise ConfigError(f"counting: {exc}") from None
    malicious = _parse_malicious(args.malicious)
    if any(not 1 <= i <= args.n for i in malicious):
        raise ConfigError("malicious: user index out of range")
    xs = [1] * args.ones + [0] * (args.n - args.ones)
    trials = args.trials if args.trials is not None else 10_000
    z = simulate_counting(params, xs, trials, make_rng(args.seed or 0), malicious)
    honest_count = sum(x for i, x in enumerate(xs, 1) if i not in malicious)
    doc = {"n": args.n, "epsilon": args.epsilon, "delta": args.delta, "t": params.t,
           "noise_epsilon": params.noise_epsilon, "trials": trials, "true_count": sum(xs),
           "honest_count": honest_count, "malicious": {str(k): list(v) for k, v in sorted(malicious.items())},
           "mean": float(z.mean()), "sd": float(z.std(ddof=1)) if trials > 1 else 0.0,
           "expected_output": au.jsonable(expected_output(params, xs, malicious))}
    return doc, EXIT_OK


# ---------------------------------------------------------------------------
# plumbing

def _load(args) -> ScenarioConfig:
    if (args.config is None) == (args.scenario is None):
        raise ConfigError("config: give exactly one of --config PATH or --scenario NAME")
    return load_config(args.config) if args.config else load_builtin(args.scenario)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multiserver-dp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(sp, audit=False):
        sp.add_argument("--config", metavar="PATH", help="scenario JSON document")
        sp.add_argument("--scenario", metavar="NAME", help=f"built-in scenario: {', '.join(builtin_names())}")
        sp.add_argument("--seed", type=int, help="root seed (overrides the scenario)")
        sp.add_argument("--trials", type=int, help="Monte-Carlo trials (overrides the scenario)")
        sp.add_argument("--ceiling", type=int, help="enumeration ceiling in atoms")
        sp.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
        sp.add_argument("--mutant", choices=sorted(MUTANTS), help="negative control to inject; only its targeted audit runs")
        sp.add_argument("--mode", choices=["exact", "mc"], default="exact")

    scenario_flags(sub.add_parser("run", help="execute the protocol and summarise outputs"))
    scenario_flags(sub.add_parser("transform", help="compile into an online algorithm and report the budget"))
    scenario_flags(sub.add_parser("audit", help="run the scenario's audits"))

    rp = sub.add_parser("report", help="summarise a saved audit report")
    rp.add_argument("input", metavar="REPORT")

    cp = sub.add_parser("counting", help="simulate the robust counting protocol")
    cp.add_argument("--n", type=int, required=True)
    cp.add_argument("--epsilon", type=float, default=1.0)
    cp.add_argument("--delta", type=float, default=0.01)
    cp.add_argument("--t", type=int, help="noise support size (default from the budget)")
    cp.add_argument("--ones", type=int, default=0, help="number of users holding 1")
    cp.add_argument("--trials", type=int)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--malicious", action="append", metavar="I:Y1,Y2",
                    help="user I sends (Y1, Y2) instead of following the protocol; repeatable")
    cp.add_argument("--out", metavar="PATH")
    return parser


def _emit(doc, out):
    if doc is None:
        return
    text = json.dumps(doc, sort_keys=True, indent=2, allow_nan=False, default=repr) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            doc, code = cmd_report(args)
        elif args.command == "counting":
            doc, code = cmd_counting(args)
        else:
            config = _load(args)
            handler = {"run": cmd_run, "transform": cmd_transform, "audit": cmd_audit}[args.command]
            doc, code = handler(config, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(au.jsonable(doc) if doc is not None else None, getattr(args, "out", None))
    return code


if __name__ == "__main__":
    sys.exit(main())
