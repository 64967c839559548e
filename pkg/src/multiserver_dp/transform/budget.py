"""Stream length needed so rejection sampling finishes with probability >= 1 - beta."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from ..prob import exp_exact


@dataclass(frozen=True)
class TransformBudget:
    n: int
    epsilon: object
    beta: float
    ell: object          # lower bound on every acceptance probability
    v: int               # extra samples beyond the first batch
    m: int               # total stream length n + v

    def __post_init__(self):
        if not 0 < self.ell <= Fraction(1, 2):
            raise ValueError(f"acceptance floor {self.ell} outside (0, 1/2]")
        if self.m != self.n + self.v:
            raise ValueError("m must equal n + v")


def acceptance_floor(epsilon):
    """``1 / (2 e^{2 eps})``; a Fraction when ``e^eps`` is rational."""
    base = exp_exact(epsilon)
    if base is not None:
        return Fraction(1, 2) / base ** 2
    return 1 / (2 * math.exp(2 * float(epsilon)))


def tail_sample_count(n: int, ell, beta) -> int:
    """``ceil(n + (2n/ell) ln(1/ell) + (2/ell) ln(1/beta))``: enough trials that a
    sum of ``n`` geometric waiting times with success rates ``>= ell`` stays
    below it except with probability ``beta``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    ell = float(ell)
    return math.ceil(n + (2 * n / ell) * math.log(1 / ell) + (2 / ell) * math.log(1 / beta))


def tight_sample_count(n: int, ell, beta) -> int:
    """Chernoff count before the final simplification, with the log base
    ``(1 - ell/2) / (1 - ell)``; never larger than :func:`tail_sample_count`."""
    ell = float(ell)
    base = math.log((1 - ell / 2) / (1 - ell))
    return math.ceil(n + (n * math.log(1 / ell) + math.log(1 / beta)) / base)


def sample_budget(n: int, epsilon, beta) -> TransformBudget:
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    ell = acceptance_floor(epsilon)
    v = tail_sample_count(n, ell, beta)
    return TransformBudget(n, epsilon, beta, ell, v, n + v)
