"""Turning an approximate-DP channel into a nearby pure-DP one."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from ..prob import JointDist, align, check_closeness, exp_exact, statistical_distance
from ..protocol import Randomizer
from .lp import linprog_exact

# bits kept in the rational lower bound on e^{2 eps} fed to the LP
_RATIO_BITS = 40


class PurificationError(RuntimeError):
    """The purification program had no solution or its answer failed re-audit."""


@dataclass(frozen=True, eq=False)
class PurifiedRandomizer:
    original: Randomizer
    purified: Randomizer
    distances: dict                 # x -> SD(original(x), purified(x))
    epsilon: object
    delta: object
    solved: bool = False            # False when no program had to be run
    pivots: int = 0
    notes: tuple = field(default_factory=tuple)

    @property
    def max_distance(self):
        return max(self.distances.values(), default=0)


def _ratio_bound(two_eps) -> Fraction:
    exact = exp_exact(two_eps)
    if exact is not None:
        return exact
    return Fraction(math.floor(math.exp(float(two_eps)) * (1 - 1e-12) * 2 ** _RATIO_BITS), 2 ** _RATIO_BITS)


def _pairwise(r: Randomizer, epsilon, delta) -> list:
    xs = r.input_domain.elements
    bad = []
    for i, a in enumerate(xs):
        for b in xs[i + 1:]:
            p, q = align(r(a), r(b))
            rep = check_closeness(p, q, epsilon, delta)
            if not rep.satisfied:
                bad.append((a, b, rep.worst_delta))
    return bad


def is_pure(r: Randomizer, epsilon) -> bool:
    return not _pairwise(r, epsilon, 0)


def purify(r: Randomizer, epsilon, delta, check_precondition: bool = True) -> PurifiedRandomizer:
    """Closest (in summed L1 excess) channel that is ``2*epsilon``-pure and
    within ``delta`` of ``r`` at every input.

    Variables are the purified pmf ``s[x, y]`` and the excess ``d[x, y] >=
    r[x, y] - s[x, y]``.  Constraints: rows of ``s`` sum to one, ``sum_y d[x, y]
    <= delta`` and ``s[x, y] <= E * s[x', y]`` with ``E`` a rational lower bound on
    ``e^{2 eps}``.  Only outcomes in the original support can carry mass.
    """
    xs = r.input_domain.elements
    dist0 = {x: Fraction(0) for x in xs}
    if delta == 0:
        return PurifiedRandomizer(r, r, dist0, epsilon, delta, notes=("delta is zero; skipped",))
    if check_precondition:
        bad = _pairwise(r, epsilon, delta)
        if bad:
            raise PurificationError(f"{r.name} is not ({epsilon}, {delta})-DP; failing pairs {bad[:3]}")
    if is_pure(r, 2 * epsilon):
        return PurifiedRandomizer(r, r, dist0, epsilon, delta, notes=("already pure at twice epsilon",))

    outcomes = sorted({y for x in xs for y in r(x).support()}, key=repr)
    ny = len(outcomes)
    q = {(x, y): Fraction(r(x).prob(y)) for x in xs for y in outcomes}
    s_index = {(x, y): a * ny + b for a, x in enumerate(xs) for b, y in enumerate(outcomes)}
    d_keys = [key for key in s_index if q[key] > 0]
    d_index = {key: len(s_index) + c for c, key in enumerate(d_keys)}
    nvar = len(s_index) + len(d_keys)
    ratio = _ratio_bound(2 * epsilon)
    delta_q = Fraction(delta)

    def row(entries):
        out = [0] * nvar
        for j, v in entries:
            out[j] += v
        return out

    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for x in xs:
        A_eq.append(row((s_index[x, y], 1) for y in outcomes))
        b_eq.append(1)
        A_ub.append(row((d_index[x, y], 1) for y in outcomes if (x, y) in d_index))
        b_ub.append(min(delta_q, 1))
    for key in d_keys:
        A_ub.append(row([(s_index[key], -1), (d_index[key], -1)]))
        b_ub.append(-q[key])
    for y in outcomes:
        for x in xs:
            for x2 in xs:
                if x2 != x:
                    A_ub.append(row([(s_index[x, y], 1), (s_index[x2, y], -ratio)]))
                    b_ub.append(0)
    cost = [0] * len(s_index) + [1] * len(d_keys)
    res = linprog_exact(cost, A_ub, b_ub, A_eq, b_eq)
    if res.status != "optimal":
        raise PurificationError(f"purification program for {r.name} is {res.status} "
                                f"({len(xs)} inputs, {ny} outcomes, delta={delta})")

    table = {x: JointDist.from_mapping({y: res.x[s_index[x, y]] for y in outcomes
                                        if res.x[s_index[x, y]] > 0})
             for x in xs}
    purified = Randomizer(r.input_domain, table, name=f"{r.name}~pure")
    distances = {}
    for x in xs:
        a, b = align(r(x), purified(x))
        distances[x] = statistical_distance(a, b)
        if distances[x] > delta_q:
            raise PurificationError(f"re-audit: SD at input {x!r} is {distances[x]} > {delta}")
    if not is_pure(purified, 2 * epsilon):
        raise PurificationError("re-audit: purified channel is not pure at twice epsilon")
    return PurifiedRandomizer(r, purified, distances, epsilon, delta, solved=True, pivots=res.pivots)
