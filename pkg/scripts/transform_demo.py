"""Compile a built-in scenario and compare the online algorithm with the protocol.

Shows the budget, the exact output laws of the protocol under the prior and
of the compiled algorithm at its full stream length, and the measured
internal privacy on a short stream.
"""
import argparse

from multiserver_dp import auditor as au
from multiserver_dp.config import load_builtin
from multiserver_dp.online import stream_output_distribution
from multiserver_dp.prob import align, statistical_distance
from multiserver_dp.protocol import output_distribution_under
from multiserver_dp.transform import transform_protocol


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="rr-two-server-n1")
    args = ap.parse_args()
    cfg = load_builtin(args.scenario)
    compiled = transform_protocol(cfg.protocol, cfg.epsilon, cfg.delta, cfg.beta)
    b = compiled.budget
    print(f"scenario {cfg.name}: n={b.n} eps={cfg.epsilon!r} ell={b.ell} v={b.v} m={b.m}")

    ref = output_distribution_under(cfg.protocol, cfg.prior)
    got = stream_output_distribution(compiled.sampler.compact().algorithm(), cfg.prior)
    ref, got = align(ref, got)
    print(f"{'output':>18} {'protocol':>12} {'online':>12}")
    for z in ref.domain:
        print(f"{z!r:>18} {float(ref.prob(z)):>12.6f} {float(got.prob(z)):>12.6f}")
    print(f"statistical distance: {float(statistical_distance(ref, got)):.3e}")

    short = transform_protocol(cfg.protocol, cfg.epsilon, cfg.delta, cfg.beta, stream_length=b.n + 3)
    eps, delta = short.target_privacy()
    rep = au.audit_internal_privacy(short.algorithm, eps, delta)
    print(rep.line())


if __name__ == "__main__":
    main()
