"""Accuracy of robust counting as epsilon varies.

Prints the budgeted noise support t, the exact 90th percentile of the noise
error, that percentile times epsilon (which should stay roughly flat) and the
Monte-Carlo RMSE of the count over honest runs.
"""
import argparse

import numpy as np

from multiserver_dp.counting import CountingParams, error_quantile, simulate_counting


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--delta", type=float, default=0.01)
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    xs = list(rng.integers(0, 2, args.n))
    print(f"n={args.n} delta={args.delta} true count={sum(xs)}")
    print(f"{'eps':>6} {'t':>5} {'q90':>5} {'q90*eps':>8} {'rmse':>8} {'rmse*eps':>9}")
    for eps in (0.25, 0.5, 1.0, 2.0, 4.0):
        params = CountingParams.from_budget(args.n, eps, args.delta)
        q90 = error_quantile(params.t, params.noise_epsilon)
        z = simulate_counting(params, xs, args.trials, rng)
        rmse = float(np.sqrt(np.mean((z - sum(xs)) ** 2)))
        print(f"{eps:>6} {params.t:>5} {q90:>5} {q90 * eps:>8.2f} {rmse:>8.3f} {rmse * eps:>9.3f}")


if __name__ == "__main__":
    main()
