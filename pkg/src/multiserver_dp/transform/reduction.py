"""Collapse a k-server protocol into two super-servers.

Servers ``1..h`` (``h = ceil(k/2)``) become super-server 1 and the rest
super-server 2.  Super-server 1 simulates its block and sends every message
that crosses the cut, bundled as one tuple ordered by edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..prob import FiniteDist, JointDist
from ..protocol import (
    OUT,
    Attack,
    CommDag,
    Protocol,
    ProtocolError,
    Randomizer,
    ServerAlg,
    ViewRecord,
)


def _simulate(p: Protocol, block: range, ys_by_server: dict, incoming: dict) -> FiniteDist:
    """Run the servers in ``block`` (in order) and return the law of every
    message they produce, as a sorted tuple of ``(edge_or_out, value)`` pairs."""
    rows: dict = {tuple(sorted(incoming.items())): 1}
    for j in block:
        server = p.servers[j - 1]
        outs = p.dag.out_neighbors(j)
        nxt: dict = {}
        for row, w in rows.items():
            known = dict(row)
            zs = {a: known[(a, j)] for a in p.dag.in_neighbors(j)}
            for label, v in server(ys_by_server[j], zs).items():
                if not v:
                    continue
                if j == p.k:
                    produced = ((OUT, label),)
                elif server.broadcast:
                    produced = tuple(((j, b), label) for b in outs)
                else:
                    if not isinstance(label, tuple) or len(label) != len(outs):
                        raise ProtocolError(f"server {j} produced {label!r}; expected {len(outs)} messages")
                    produced = tuple(((j, b), val) for b, val in zip(outs, label))
                key = tuple(sorted(row + produced, key=repr))
                nxt[key] = nxt.get(key, 0) + w * v
        rows = nxt
    return FiniteDist.from_mapping(rows)


@dataclass(frozen=True, eq=False)
class TwoServerReduction:
    source: Protocol
    protocol: Protocol
    half: int                       # servers 1..half form super-server 1
    cross_edges: tuple              # edges (a, b) with a <= half < b, sorted

    @property
    def grouping(self) -> tuple:
        k = self.source.k
        return tuple(range(1, self.half + 1)), tuple(range(self.half + 1, k + 1))

    def map_attack(self, attack: Attack) -> Attack:
        """Attack on the source protocol whose view projects onto ``attack``'s."""
        first, second = self.grouping
        servers = set()
        if 1 in attack.corrupt_servers:
            servers |= set(first)
        if 2 in attack.corrupt_servers:
            servers |= set(second)
        return Attack(attack.corrupt_users, frozenset(servers))

    def project_view(self, record: ViewRecord) -> ViewRecord:
        """Rewrite a source-protocol view (under the mapped attack) in the
        reduced protocol's message names."""
        if self.source is self.protocol:
            return record
        d = record.as_dict()
        first, second = self.grouping
        out = {}
        for key, value in d.items():
            if key[0] in ("x",) or key == OUT:
                out[key] = value
        users = sorted({key[1] for key in d if key[0] == "y"})
        for i in users:
            for slot, block in ((1, first), (2, second)):
                if all(("y", i, j) in d for j in block):
                    out[("y", i, slot)] = tuple(d[("y", i, j)] for j in block)
        if all(("z", a, b) in d for a, b in self.cross_edges):
            out[("z", 1, 2)] = tuple(d[("z", a, b)] for a, b in self.cross_edges)
        return ViewRecord(tuple(sorted(out.items())))


def reduce_k_to_2(p: Protocol) -> TwoServerReduction:
    k = p.k
    if k == 2:
        return TwoServerReduction(p, p, 1, ((1, 2),))
    if k < 2:
        raise ProtocolError("the reduction needs at least two servers")
    h = math.ceil(k / 2)
    cross = tuple(sorted((a, b) for a, b in p.dag.edges if a <= h < b))
    if not cross:
        raise ProtocolError("no edge crosses the split; the sink cannot depend on the first half")

    randomizers = []
    for r in p.randomizers:
        table = {x: JointDist.from_mapping(r(x).map(lambda y: (y[:h], y[h:])).as_dict())
                 for x in r.input_domain}
        randomizers.append(Randomizer(r.input_domain, table, name=f"{r.name}/2"))

    def first(ys, zs):
        by_server = {j: tuple(y[j - 1] for y in ys) for j in range(1, h + 1)}
        law = _simulate(p, range(1, h + 1), by_server, {})
        return law.map(lambda row: tuple(dict(row)[e] for e in cross))

    def second(ys, zs):
        by_server = {j: tuple(y[j - h - 1] for y in ys) for j in range(h + 1, k + 1)}
        incoming = dict(zip(cross, zs[1]))
        law = _simulate(p, range(h + 1, k + 1), by_server, incoming)
        return law.map(lambda row: dict(row)[OUT])

    servers = (ServerAlg(first, f"{p.name}/servers1-{h}"), ServerAlg(second, f"{p.name}/servers{h + 1}-{k}"))
    reduced = Protocol(tuple(randomizers), servers, CommDag(2, frozenset({(1, 2)})), f"{p.name}/two-server")
    return TwoServerReduction(p, reduced, h, cross)
