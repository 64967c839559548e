"""Exceedance of the stream budget by a sum of geometric waiting times.

For each (n, ell, beta) the simplified and the tighter sample counts are
printed next to the Monte-Carlo exceedance frequency at the slowest
admissible rate, which is ell for every user.
"""
import argparse
import itertools
import json

import numpy as np

from multiserver_dp.transform import tail_sample_count, tight_sample_count


def exceedance(n, ell, v, trials, rng):
    totals = rng.geometric(ell, size=(trials, n)).sum(axis=1)
    return float(np.mean(totals > v))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true", help="emit JSON lines instead of a table")
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    if not args.json:
        print(f"{'n':>4} {'ell':>6} {'beta':>6} {'v':>6} {'v_tight':>8} {'freq(v)':>9} {'freq(tight)':>12}")
    for n, ell, beta in itertools.product([1, 5, 10, 50], [0.05, 0.2, 0.5], [0.1, 0.05, 0.01]):
        v, vt = tail_sample_count(n, ell, beta), tight_sample_count(n, ell, beta)
        f, ft = exceedance(n, ell, v, args.trials, rng), exceedance(n, ell, vt, args.trials, rng)
        if args.json:
            print(json.dumps({"n": n, "ell": ell, "beta": beta, "v": v, "v_tight": vt,
                              "freq": f, "freq_tight": ft}, sort_keys=True))
        else:
            print(f"{n:>4} {ell:>6} {beta:>6} {v:>6} {vt:>8} {f:>9.4f} {ft:>12.4f}")


if __name__ == "__main__":
    main()
