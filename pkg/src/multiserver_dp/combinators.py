"""Named building blocks for randomizers and server algorithms.

Every block here produces explicit finite tables (or channels returning
:class:`FiniteDist`), which is what exact enumeration needs.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Sequence

from .prob import Domain, FiniteDist, JointDist, exp_exact, exp_fraction
from .protocol import Randomizer, ServerAlg


def exp_weight(eps) -> Fraction:
    """``e**eps`` as a Fraction: exact for ``ln(r)`` parameters, else a
    160-bit dyadic approximation."""
    exact = exp_exact(eps)
    return exact if exact is not None else exp_fraction(float(eps))


def rr_keep_probability(eps) -> Fraction:
    e = exp_weight(eps)
    return e / (1 + e)


def randomized_response(eps, domain: Sequence = (0, 1)) -> dict:
    """k-ary randomized response table ``x -> FiniteDist`` over ``domain``."""
    domain = tuple(domain)
    e = exp_weight(eps)
    z = e + len(domain) - 1
    return {x: FiniteDist.from_mapping({y: (e if y == x else 1) / z for y in domain}, domain)
            for x in domain}


# ---------------------------------------------------------------------------
# randomizers

def table_randomizer(domain: Sequence, table: Mapping[Any, Mapping[tuple, Any]], name="table") -> Randomizer:
    """Randomizer from ``{x: {(y_1, ..., y_k): prob}}``."""
    channel = {x: JointDist.from_mapping({tuple(y): Fraction(w) for y, w in table[x].items()})
               for x in domain}
    return Randomizer(Domain(tuple(domain)), channel, name)


def independent_randomizer(domain: Sequence, channels: Sequence[Mapping[Any, FiniteDist]],
                           name="independent") -> Randomizer:
    """Messages drawn independently, one channel per server."""
    channel = {x: JointDist.product_of([c[x] for c in channels]) for x in domain}
    return Randomizer(Domain(tuple(domain)), channel, name)


def clear_randomizer(domain: Sequence, k: int, name="clear") -> Randomizer:
    """Sends the raw input to every server."""
    channel = {x: JointDist.from_mapping({(x,) * k: Fraction(1)}) for x in domain}
    return Randomizer(Domain(tuple(domain)), channel, name)


def additive_share_randomizer(domain: Sequence, k: int, modulus: int,
                              pre: Mapping[Any, FiniteDist] | None = None,
                              name="additive-shares") -> Randomizer:
    """Additive secret shares mod ``modulus`` of ``pre(x)`` (default: ``x`` itself).

    The first ``k - 1`` shares are uniform; the last completes the sum.
    """
    channel = {}
    for x in domain:
        base = pre[x] if pre is not None else FiniteDist.point(x)
        table: dict = {}
        for v, w in base.items():
            if not w:
                continue
            shares = [()]
            for _ in range(k - 1):
                shares = [s + (u,) for s in shares for u in range(modulus)]
            for s in shares:
                key = s + ((v - sum(s)) % modulus,)
                table[key] = table.get(key, 0) + w * Fraction(1, modulus ** (k - 1))
        channel[x] = JointDist.from_mapping(table)
    return Randomizer(Domain(tuple(domain)), channel, name)


# ---------------------------------------------------------------------------
# servers

def sum_server(modulus: int | None = None, name="sum") -> ServerAlg:
    """Deterministic sum of user messages and incoming server messages."""

    def fn(ys, zs):
        total = sum(ys) + sum(zs.values())
        return FiniteDist.point(total % modulus if modulus else total)

    return ServerAlg(fn, name, params={"modulus": modulus})


def forward_server(name="forward") -> ServerAlg:
    """Pass-through: forwards incoming server messages if any, else user messages.

    A single message is forwarded bare; several are forwarded as a tuple.
    """

    def fn(ys, zs):
        payload = tuple(zs[a] for a in sorted(zs)) if zs else tuple(ys)
        return FiniteDist.point(payload[0] if len(payload) == 1 else payload)

    return ServerAlg(fn, name)


def constant_server(value=0, name="constant") -> ServerAlg:
    return ServerAlg(lambda ys, zs: FiniteDist.point(value), name, params={"value": value})


def noisy_clamped_sum_server(noise: FiniteDist, lo: int, hi: int, user_sign: int = 1,
                             offset: int = 0, name="noisy-clamped-sum") -> ServerAlg:
    """``alpha + sum(incoming) + sign * sum(y * [lo <= y <= hi]) - offset`` with
    ``alpha ~ noise``.  Out-of-range user messages contribute nothing."""

    def fn(ys, zs):
        base = sum(zs.values()) + user_sign * sum(y for y in ys if lo <= y <= hi) - offset
        return noise.relabel(lambda a: base + a)

    return ServerAlg(fn, name, params={"lo": lo, "hi": hi, "user_sign": user_sign, "offset": offset})


def table_server(table: Mapping[tuple, FiniteDist], name="table", broadcast=True) -> ServerAlg:
    """Explicit channel keyed by ``(user_msgs, ((src, z), ...))``."""

    def fn(ys, zs):
        key = (tuple(ys), tuple(sorted(zs.items())))
        if key not in table:
            raise KeyError(f"{name}: no table entry for received messages {key!r}")
        return table[key]

    return ServerAlg(fn, name, broadcast=broadcast)
