"""Two-server robust counting of bits.

Each user splits ``x + eta`` and ``eta`` between the servers, with ``eta`` from
a truncated discrete Laplace law on ``{0, ..., t}``.  Both servers add their
own noise and ignore any message outside ``[0, t + 1]``, which caps how far a
single dishonest user can move the count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .combinators import noisy_clamped_sum_server, table_randomizer
from .prob import FiniteDist, exp_exact, exp_fraction, sample_many
from .protocol import CommDag, Protocol

# per-weight precision when e^{-eps} is irrational; absolute error < 2^-64
_WEIGHT_BITS = 64


def dt_pmf(t: int, epsilon) -> FiniteDist:
    """``Pr[v] ∝ exp(-eps * |t/2 - v|)`` on ``{0, ..., t}``.

    Exact when ``e^eps`` is rational and ``t`` even; otherwise every weight is
    a 64-bit dyadic rounding of the exponential, which keeps the pmf exactly
    symmetric about ``t/2`` because equal distances get identical weights.
    """
    if t < 1:
        raise ValueError("t must be a positive integer")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    base = exp_exact(epsilon)
    weights = {}
    for v in range(t + 1):
        twice_dist = abs(t - 2 * v)
        if base is not None and twice_dist % 2 == 0:
            weights[v] = Fraction(1) / base ** (twice_dist // 2)
        else:
            weights[v] = exp_fraction(-float(epsilon) * twice_dist / 2, _WEIGHT_BITS)
    total = sum(weights.values())
    return FiniteDist.from_mapping({v: w / total for v, w in weights.items()}, range(t + 1))


@dataclass(frozen=True)
class TruncatedDiscreteLaplace:
    t: int
    epsilon: object

    @property
    def pmf(self) -> FiniteDist:
        return dt_pmf(self.t, self.epsilon)

    def sample(self, rng: np.random.Generator, size=None):
        idx = sample_many(self.pmf, rng, size if size is not None else 1)
        values = np.asarray(self.pmf.domain.elements)[idx]
        return values if size is not None else int(values[0])


def choose_t(epsilon, delta) -> int:
    """Candidate support size ``2 * ceil(ln(2/delta) / eps)``; always even.

    Only a candidate: the privacy audit has to confirm it.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return 2 * math.ceil(math.log(2 / delta) / float(epsilon))


@dataclass(frozen=True)
class CountingParams:
    n: int
    t: int
    epsilon: object            # protocol-level privacy target
    delta: float
    noise_epsilon: object      # exponent of each noise draw

    def __post_init__(self):
        if self.t < 2 or self.t % 2:
            raise ValueError(f"t must be even and at least 2, got {self.t}")
        if self.n < 0:
            raise ValueError("n must be non-negative")

    @classmethod
    def from_budget(cls, n: int, epsilon, delta) -> "CountingParams":
        """Each server sees two noisy values, so each gets half the budget."""
        half = float(epsilon) / 2
        return cls(n, choose_t(half, delta / 2), epsilon, delta, half)

    @property
    def noise(self) -> TruncatedDiscreteLaplace:
        return TruncatedDiscreteLaplace(self.t, self.noise_epsilon)

    @property
    def lo(self) -> int:
        return 0

    @property
    def hi(self) -> int:
        return self.t + 1


def counting_randomizer(params: CountingParams):
    """Randomizer sending ``(x + eta, eta)``."""
    pmf = params.noise.pmf
    table = {x: {(x + eta, eta): w for eta, w in pmf.items() if w} for x in (0, 1)}
    return table_randomizer((0, 1), table, name="counting-split")


def server1(params: CountingParams):
    return noisy_clamped_sum_server(params.noise.pmf, params.lo, params.hi, name="counting-server1")


def server2(params: CountingParams):
    return noisy_clamped_sum_server(params.noise.pmf, params.lo, params.hi, user_sign=-1,
                                    offset=params.t, name="counting-server2")


def counting_protocol(params: CountingParams) -> Protocol:
    r = counting_randomizer(params)
    return Protocol((r,) * params.n, (server1(params), server2(params)),
                    CommDag(2, frozenset({(1, 2)})), name="robust-counting")


def _clip(v, params: CountingParams):
    return v if params.lo <= v <= params.hi else 0


def run_counting(params: CountingParams, xs: Sequence[int], rng: np.random.Generator,
                 malicious: Mapping[int, tuple] | None = None) -> int:
    """One execution.  ``malicious`` maps a 1-based user index to the
    ``(y1, y2)`` pair that user sends instead of following the protocol."""
    return int(simulate_counting(params, xs, 1, rng, malicious)[0])


def simulate_counting(params: CountingParams, xs: Sequence[int], trials: int, rng: np.random.Generator,
                      malicious: Mapping[int, tuple] | None = None) -> np.ndarray:
    """Vectorised executions; returns ``trials`` outputs."""
    malicious = dict(malicious or {})
    if len(xs) != params.n:
        raise ValueError(f"expected {params.n} inputs, got {len(xs)}")
    if any(x not in (0, 1) for x in xs):
        raise ValueError("inputs must be bits")
    noise = params.noise
    lo, hi = params.lo, params.hi
    honest = [i for i in range(1, params.n + 1) if i not in malicious]
    xs_h = np.array([xs[i - 1] for i in honest], dtype=np.int64)
    eta = noise.sample(rng, (trials, len(honest))).astype(np.int64)
    y1, y2 = eta + xs_h, eta
    in1 = ((y1 >= lo) & (y1 <= hi)) * y1
    in2 = ((y2 >= lo) & (y2 <= hi)) * y2
    bad1 = sum(_clip(a, params) for a, _ in malicious.values())
    bad2 = sum(_clip(b, params) for _, b in malicious.values())
    alpha1 = noise.sample(rng, trials).astype(np.int64)
    alpha2 = noise.sample(rng, trials).astype(np.int64)
    z12 = alpha1 + in1.sum(axis=1) + bad1
    return z12 + alpha2 - params.t - in2.sum(axis=1) - bad2


# ---------------------------------------------------------------------------
# exact summaries

def expected_output(params: CountingParams, xs: Sequence[int], malicious: Mapping[int, tuple] | None = None):
    """``E[z_out]`` by summing over the noise pmf, with the range checks applied."""
    malicious = dict(malicious or {})
    pmf = params.noise.pmf
    mean_noise = pmf.mean()
    total = 2 * mean_noise - params.t
    for i in range(1, params.n + 1):
        if i in malicious:
            a, b = malicious[i]
            total += _clip(a, params) - _clip(b, params)
        else:
            x = xs[i - 1]
            total += sum(w * (_clip(x + e, params) - _clip(e, params)) for e, w in pmf.items())
    return total


def noise_error_distribution(t: int, epsilon) -> FiniteDist:
    """Law of ``|alpha_1 + alpha_2 - t|`` with independent draws from ``dt_pmf``."""
    pmf = dt_pmf(t, epsilon)
    return pmf.product(pmf).map(lambda ab: abs(ab[0] + ab[1] - t))


def error_quantile(t: int, epsilon, q=Fraction(9, 10)) -> int:
    """Smallest ``c`` with ``Pr[|alpha_1 + alpha_2 - t| <= c] >= q``."""
    law = noise_error_distribution(t, epsilon)
    acc = 0
    for c in sorted(law.support()):
        acc += law.prob(c)
        if acc >= q:
            return c
    return max(law.support())
