"""Non-interactive multi-server protocols: execution, attacks and exact views.

Users are numbered ``1..n`` and servers ``1..k`` in topological order, so the
communication graph only has forward edges ``(j, j2)`` with ``j < j2`` and
server ``k`` produces the output.  Transcript entries are keyed by

* ``("x", i)``       -- input of user ``i``
* ``("y", i, j)``    -- message from user ``i`` to server ``j``
* ``("z", j, j2)``   -- message from server ``j`` to server ``j2``
* ``("out",)``       -- the protocol output
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .prob import (
    ClosenessReport,
    Domain,
    EnumerationLimitError,
    FiniteDist,
    JointDist,
    align,
    check_closeness,
    condition,
    sample,
)

DEFAULT_CEILING = 10 ** 7
OUT = ("out",)


class ProtocolError(ValueError):
    """Malformed protocol: bad graph, misaligned alphabets, wrong arities."""


# ---------------------------------------------------------------------------
# building blocks

@dataclass(frozen=True, eq=False)
class Randomizer:
    """Local randomizer: a table from each input symbol to a joint message law.

    ``channel[x]`` is a :class:`JointDist` over ``k``-tuples ``(y_1, ..., y_k)``.
    """

    input_domain: Domain
    channel: Mapping[Any, JointDist]
    name: str = "randomizer"

    def __post_init__(self):
        if not isinstance(self.input_domain, Domain):
            object.__setattr__(self, "input_domain", Domain(tuple(self.input_domain)))
        missing = [x for x in self.input_domain if x not in self.channel]
        if missing:
            raise ProtocolError(f"{self.name}: channel undefined for inputs {missing!r}")
        arities = {self.channel[x].arity for x in self.input_domain}
        if len(arities) != 1:
            raise ProtocolError(f"{self.name}: inconsistent message arity {sorted(arities)}")
        object.__setattr__(self, "channel", dict(self.channel))

    @property
    def k(self) -> int:
        return self.channel[self.input_domain.elements[0]].arity

    def __call__(self, x) -> JointDist:
        return self.channel[x]

    def message_domain(self, coord: int) -> tuple:
        """Labels reachable on (0-based) coordinate ``coord`` from any input."""
        seen: dict = {}
        for x in self.input_domain:
            for y in self.channel[x].support():
                seen[y[coord]] = None
        return tuple(seen)

    def conditional(self, x, coords: Sequence[int], value: Sequence) -> JointDist:
        return condition(self.channel[x], coords, value)


def marginal(r: Randomizer, servers: Iterable[int]) -> Randomizer:
    """Restrict a randomizer to the messages for ``servers`` (1-based)."""
    servers = tuple(servers)
    if not servers:
        raise ProtocolError("marginal needs a non-empty server subset")
    if any(not 1 <= j <= r.k for j in servers):
        raise ProtocolError(f"server subset {servers} outside 1..{r.k}")
    coords = [j - 1 for j in servers]
    table = {x: r.channel[x].marginal(coords) for x in r.input_domain}
    return Randomizer(r.input_domain, table, name=f"{r.name}|{set(servers)}")


@dataclass(frozen=True, eq=False)
class ServerAlg:
    """A server's channel from received messages to its outgoing messages.

    ``fn(user_msgs, incoming)`` gets the tuple ``(y_{1,j}, ..., y_{n,j})`` and a
    dict ``{j_src: z_{j_src -> j}}``.  It returns a :class:`FiniteDist`.  With
    ``broadcast=True`` the returned label is sent unchanged along every
    out-edge; otherwise labels must already be tuples with one entry per
    out-edge (sorted by destination).  For the sink the label is the output.
    """

    fn: Callable[[tuple, dict], FiniteDist]
    name: str = "server"
    broadcast: bool = True
    params: Mapping[str, Any] = field(default_factory=dict)

    def __call__(self, user_msgs: tuple, incoming: dict) -> FiniteDist:
        return self.fn(user_msgs, incoming)


@dataclass(frozen=True)
class CommDag:
    """Forward-only communication graph on servers ``1..k``; ``k`` is the sink."""

    k: int
    edges: frozenset

    def __post_init__(self):
        edges = frozenset(tuple(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.k < 1:
            raise ProtocolError("a protocol needs at least one server")
        for j, j2 in sorted(edges):
            if not (1 <= j <= self.k and 1 <= j2 <= self.k):
                raise ProtocolError(f"edge ({j},{j2}) names a server outside 1..{self.k}")
            if j >= j2:
                raise ProtocolError(
                    f"edge ({j},{j2}) does not follow the topological order (need j < j2)")
        for j in range(1, self.k):
            if not self.out_neighbors(j):
                raise ProtocolError(f"server {j} has no out-edge; server {self.k} must be the unique sink")

    def out_neighbors(self, j: int) -> tuple:
        return tuple(sorted(b for a, b in self.edges if a == j))

    def in_neighbors(self, j: int) -> tuple:
        return tuple(sorted(a for a, b in self.edges if b == j))

    @classmethod
    def complete(cls, k: int) -> "CommDag":
        return cls(k, frozenset((a, b) for a in range(1, k + 1) for b in range(a + 1, k + 1)))


@dataclass(frozen=True, eq=False)
class Protocol:
    randomizers: tuple
    servers: tuple
    dag: CommDag
    name: str = "protocol"

    def __post_init__(self):
        object.__setattr__(self, "randomizers", tuple(self.randomizers))
        object.__setattr__(self, "servers", tuple(self.servers))
        if len(self.servers) != self.dag.k:
            raise ProtocolError(f"{len(self.servers)} server algorithms for a {self.dag.k}-server graph")
        domains = {r.input_domain for r in self.randomizers}
        if len(domains) > 1:
            raise ProtocolError("all users must share one input domain")
        for i, r in enumerate(self.randomizers, 1):
            if r.k != self.dag.k:
                raise ProtocolError(f"user {i} sends {r.k} messages but there are {self.dag.k} servers")

    @property
    def n(self) -> int:
        return len(self.randomizers)

    @property
    def k(self) -> int:
        return self.dag.k

    @property
    def input_domain(self) -> Domain | None:
        return self.randomizers[0].input_domain if self.randomizers else None

    def with_randomizers(self, randomizers: Sequence[Randomizer], name: str | None = None) -> "Protocol":
        return Protocol(tuple(randomizers), self.servers, self.dag, name or self.name)


@dataclass(frozen=True)
class Attack:
    """Semi-honest coalition of corrupted users and servers."""

    corrupt_users: frozenset = frozenset()
    corrupt_servers: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "corrupt_users", frozenset(self.corrupt_users))
        object.__setattr__(self, "corrupt_servers", frozenset(self.corrupt_servers))

    def validate(self, p: Protocol):
        if not all(1 <= i <= p.n for i in self.corrupt_users):
            raise ProtocolError(f"corrupt users {sorted(self.corrupt_users)} outside 1..{p.n}")
        if not all(1 <= j <= p.k for j in self.corrupt_servers):
            raise ProtocolError(f"corrupt servers {sorted(self.corrupt_servers)} outside 1..{p.k}")

    def describe(self) -> dict:
        return {"corrupt_users": sorted(self.corrupt_users), "corrupt_servers": sorted(self.corrupt_servers)}


@dataclass(frozen=True, order=True)
class ViewRecord:
    """Sorted ``((key, value), ...)`` pairs of everything an adversary sees."""

    items: tuple

    def __hash__(self):
        # views are hashed many times during comparisons; cache it
        h = self.__dict__.get("_hash")
        if h is None:
            h = hash(self.items)
            object.__setattr__(self, "_hash", h)
        return h

    def __getitem__(self, key):
        for k, v in self.items:
            if k == key:
                return v
        raise KeyError(key)

    def keys(self) -> tuple:
        return tuple(k for k, _ in self.items)

    def as_dict(self) -> dict:
        return dict(self.items)

    def project(self, keys: Iterable) -> "ViewRecord":
        keys = set(keys)
        return ViewRecord(tuple(kv for kv in self.items if kv[0] in keys))


def view_keys(p: Protocol, attack: Attack) -> list:
    """Index set of the adversary's view, in canonical order (inputs excluded)."""
    attack.validate(p)
    cs, cu = attack.corrupt_servers, attack.corrupt_users
    keys = [OUT]
    keys += [("z", a, b) for a, b in sorted(p.dag.edges) if a in cs or b in cs]
    keys += [("y", i, j) for i in range(1, p.n + 1) for j in range(1, p.k + 1) if i in cu or j in cs]
    return sorted(keys)


# ---------------------------------------------------------------------------
# execution

@dataclass(frozen=True)
class Transcript:
    inputs: tuple
    messages: dict
    output: Any

    def record(self) -> ViewRecord:
        return ViewRecord(tuple(sorted(self.messages.items())))


def _server_inputs(p: Protocol, j: int, get) -> tuple[tuple, dict]:
    ys = tuple(get(("y", i, j)) for i in range(1, p.n + 1))
    zs = {a: get(("z", a, j)) for a in p.dag.in_neighbors(j)}
    return ys, zs


def _outgoing(p: Protocol, j: int, server: ServerAlg, label) -> tuple:
    outs = p.dag.out_neighbors(j)
    if server.broadcast:
        return tuple((("z", j, b), label) for b in outs)
    if not isinstance(label, tuple) or len(label) != len(outs):
        raise ProtocolError(f"server {j} ({server.name}) produced {label!r}; expected {len(outs)} messages")
    return tuple((("z", j, b), v) for b, v in zip(outs, label))


def _check_inputs(p: Protocol, x: Sequence):
    if len(x) != p.n:
        raise ProtocolError(f"expected {p.n} inputs, got {len(x)}")
    for i, xi in enumerate(x, 1):
        if xi not in p.randomizers[i - 1].input_domain:
            raise ProtocolError(f"input {xi!r} of user {i} is outside the input domain")


def execute(p: Protocol, x: Sequence, rng: np.random.Generator) -> Transcript:
    """Run the protocol once: users first, then servers in topological order."""
    x = tuple(x)
    _check_inputs(p, x)
    msgs: dict = {}
    for i, (r, xi) in enumerate(zip(p.randomizers, x), 1):
        ys = sample(r(xi), rng)
        for j, y in enumerate(ys, 1):
            msgs[("y", i, j)] = y
    output = None
    for j, server in enumerate(p.servers, 1):
        ys, zs = _server_inputs(p, j, msgs.__getitem__)
        label = sample(server(ys, zs), rng)
        if j == p.k:
            output = label
            msgs[OUT] = label
        else:
            msgs.update(_outgoing(p, j, server, label))
    return Transcript(x, msgs, output)


# ---------------------------------------------------------------------------
# exact enumeration

class _Table:
    """Partial transcripts as ``{values_tuple: weight}`` over named columns.

    Exact weights are integers over the shared denominator ``scale``: one lcm
    per expansion replaces a Fraction operation per row.  Any float kernel
    switches the table to float weights (``scale = None``).
    """

    def __init__(self, ceiling: int):
        self.cols: list = []
        self.rows: dict = {(): 1}
        self.scale = 1
        self.ceiling = ceiling

    def col(self, key) -> int:
        return self.cols.index(key)

    def weight(self, w):
        return Fraction(w, self.scale) if self.scale is not None else w

    def expand(self, new_cols: Sequence, kernel: Callable[[tuple], tuple], split: Callable):
        laws: dict = {}
        keyed = []
        for row, w in self.rows.items():
            dist, ckey = kernel(row)
            if ckey not in laws:
                laws[ckey] = dist
            keyed.append((row, w, ckey))
        if self.scale is not None and all(d.exact for d in laws.values()):
            lcm = math.lcm(*(d._scaled[1] for d in laws.values()))
            parts = {ck: [(split(lbl), v * (lcm // d._scaled[1]))
                          for lbl, v in zip(d.domain.elements, d._scaled[0]) if v]
                     for ck, d in laws.items()}
            self.scale *= lcm
        else:
            if self.scale is not None:
                keyed = [(row, w / self.scale, ck) for row, w, ck in keyed]
                self.scale = None
            parts = {ck: [(split(lbl), float(v)) for lbl, v in d.items() if v] for ck, d in laws.items()}
        out: dict = {}
        for row, w, ck in keyed:
            for vals, v in parts[ck]:
                key = row + vals
                out[key] = out.get(key, 0) + w * v
            if len(out) > self.ceiling:
                raise EnumerationLimitError(
                    f"exact enumeration exceeds {self.ceiling} atoms; use Monte-Carlo mode")
        self.cols = self.cols + list(new_cols)
        self.rows = out

    def keep(self, keys: Iterable):
        keys = [k for k in self.cols if k in set(keys)]
        idx = [self.cols.index(k) for k in keys]
        if len(idx) == len(self.cols):
            return
        out: dict = {}
        for row, w in self.rows.items():
            key = tuple(row[i] for i in idx)
            out[key] = out.get(key, 0) + w
        self.cols, self.rows = keys, out


def _enumerate(p: Protocol, x: tuple, keep: set | None, ceiling: int) -> _Table:
    _check_inputs(p, x)
    table = _Table(ceiling)
    for i, (r, xi) in enumerate(zip(p.randomizers, x), 1):
        dist = r(xi)
        table.expand([("y", i, j) for j in range(1, p.k + 1)],
                     lambda row, d=dist: (d, None), lambda lbl: tuple(lbl))
    for j, server in enumerate(p.servers, 1):
        y_idx = [table.col(("y", i, j)) for i in range(1, p.n + 1)]
        z_idx = [(a, table.col(("z", a, j))) for a in p.dag.in_neighbors(j)]

        def kernel(row, server=server, y_idx=y_idx, z_idx=z_idx):
            ys = tuple(row[c] for c in y_idx)
            zkey = tuple((a, row[c]) for a, c in z_idx)
            return server(ys, dict(zkey)), (ys, zkey)

        if j == p.k:
            table.expand([OUT], kernel, lambda lbl: (lbl,))
        else:
            outs = p.dag.out_neighbors(j)
            table.expand([("z", j, b) for b in outs], kernel,
                         lambda lbl, j=j, server=server: tuple(v for _, v in _outgoing(p, j, server, lbl)))
        if keep is not None:
            still_needed = {("y", i, j2) for i in range(1, p.n + 1) for j2 in range(j + 1, p.k + 1)}
            still_needed |= {("z", a, b) for a, b in p.dag.edges if b > j}
            table.keep(set(keep) | still_needed)
    return table


def transcript_distribution(p: Protocol, x: Sequence, ceiling: int = DEFAULT_CEILING) -> FiniteDist:
    """Exact law of the full transcript (every message and the output)."""
    table = _enumerate(p, tuple(x), None, ceiling)
    order = sorted(range(len(table.cols)), key=lambda c: table.cols[c])
    dist = {ViewRecord(tuple((table.cols[c], row[c]) for c in order)): table.weight(w)
            for row, w in table.rows.items()}
    return FiniteDist.from_mapping(dist)


def view_distribution(p: Protocol, attack: Attack, x: Sequence, ceiling: int = DEFAULT_CEILING) -> FiniteDist:
    """Exact law of the adversary's view, pruning unobserved messages as soon
    as no later server needs them."""
    x = tuple(x)
    keys = view_keys(p, attack)
    table = _enumerate(p, x, set(keys), ceiling)
    table.keep(keys)
    users = sorted(attack.corrupt_users)
    full = [("x", i) for i in users] + list(table.cols)
    known = tuple(x[i - 1] for i in users)
    perm = sorted(range(len(full)), key=lambda c: full[c])
    dist = {}
    for row, w in table.rows.items():
        vals = known + row
        dist[ViewRecord(tuple((full[c], vals[c]) for c in perm))] = table.weight(w)
    return FiniteDist.from_mapping(dist)


def output_distribution(p: Protocol, x: Sequence, ceiling: int = DEFAULT_CEILING) -> FiniteDist:
    table = _enumerate(p, tuple(x), {OUT}, ceiling)
    table.keep([OUT])
    return FiniteDist.from_mapping({row[0]: table.weight(w) for row, w in table.rows.items()})


def output_distribution_under(p: Protocol, prior: FiniteDist, ceiling: int = DEFAULT_CEILING) -> FiniteDist:
    """Law of ``Pi(D^n)``: inputs drawn i.i.d. from ``prior``."""
    mix: dict = {}
    for xs in itertools.product(prior.support(), repeat=p.n):
        w = Fraction(1)
        for xi in xs:
            w *= prior.prob(xi)
        for z, v in output_distribution(p, xs, ceiling).items():
            mix[z] = mix.get(z, 0) + w * v
    return FiniteDist.from_mapping(mix)


# ---------------------------------------------------------------------------
# privacy checking

def neighbor_pairs(domain: Domain, n: int, honest: Iterable[int]):
    """Unordered replace-one neighbours differing on an honest (1-based) index."""
    honest = sorted(honest)
    if n == 0 or domain is None:
        return
    elems = domain.elements
    for x in itertools.product(elems, repeat=n):
        for i in honest:
            for alt in elems[domain.index[x[i - 1]] + 1:]:
                yield i, x, x[:i - 1] + (alt,) + x[i:]


@dataclass
class PrivacyCell:
    attack: Attack
    index: int
    x: tuple
    x_prime: tuple
    report: ClosenessReport


@dataclass
class ProtocolDPReport:
    epsilon: Any
    delta: Any
    max_corrupt_servers: int
    satisfied: bool
    worst: PrivacyCell | None
    cells_checked: int

    @property
    def max_delta(self):
        return self.worst.report.worst_delta if self.worst else 0


def attacks_up_to(p: Protocol, c: int, corrupt_users: Iterable[Iterable[int]] | None = None):
    if corrupt_users is None:
        users = range(1, p.n + 1)
        corrupt_users = [s for r in range(p.n) for s in itertools.combinations(users, r)]
    for size in range(min(c, p.k) + 1):
        for cs in itertools.combinations(range(1, p.k + 1), size):
            for cu in corrupt_users:
                yield Attack(frozenset(cu), frozenset(cs))


def check_protocol_dp(p: Protocol, c: int, epsilon, delta, ceiling: int = DEFAULT_CEILING,
                      attacks: Iterable[Attack] | None = None) -> ProtocolDPReport:
    """Exhaustive multi-server DP check against every attack with ``|C_s| <= c``."""
    worst, count = None, 0
    for attack in (attacks if attacks is not None else attacks_up_to(p, c)):
        honest = [i for i in range(1, p.n + 1) if i not in attack.corrupt_users]
        cache: dict = {}

        def view(xs):
            if xs not in cache:
                cache[xs] = view_distribution(p, attack, xs, ceiling)
            return cache[xs]

        for i, x, x2 in neighbor_pairs(p.input_domain, p.n, honest):
            a, b = align(view(x), view(x2))
            rep = check_closeness(a, b, epsilon, delta)
            count += 1
            if worst is None or rep.worst_delta > worst.report.worst_delta:
                worst = PrivacyCell(attack, i, x, x2, rep)
    satisfied = worst is None or worst.report.satisfied
    return ProtocolDPReport(epsilon, delta, c, satisfied, worst, count)
