"""Scenario configuration: JSON documents describing a protocol, a prior,
transform parameters and the audits to run.

Numbers may be written as JSON numbers, fraction strings (``"2/3"``) or, for
privacy parameters, ``"ln(r)"`` strings that keep ``e^eps`` exact.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any

from . import combinators as cb
from .counting import CountingParams, counting_protocol
from .prob import FiniteDist, LogRational, ln
from .protocol import DEFAULT_CEILING, CommDag, Protocol, ProtocolError

_LN = re.compile(r"^\s*ln\(\s*([0-9/ ]+)\s*\)\s*$")


class ConfigError(ValueError):
    """Invalid scenario document; the message starts with the field path."""


def parse_number(value, path: str, allow_log: bool = False):
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        m = _LN.match(value)
        if m and allow_log:
            try:
                return ln(Fraction(m.group(1).replace(" ", "")))
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"{path}: {exc}") from None
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError):
            pass
    raise ConfigError(f"{path}: cannot read {value!r} as a number")


def format_number(value) -> Any:
    if isinstance(value, LogRational):
        return repr(value)
    if isinstance(value, Fraction):
        return str(value)
    return value


def _get(tree: dict, key: str, path: str, default=...):
    if key in tree:
        return tree[key]
    if default is ...:
        raise ConfigError(f"{path}.{key}: required field is missing")
    return default


def _label(v):
    return tuple(v) if isinstance(v, list) else v


def parse_prior(tree, path: str, domain: tuple) -> FiniteDist:
    if tree is None or tree == "uniform":
        return FiniteDist.uniform(domain)
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: expected 'uniform' or a mapping from input to weight")
    weights = {}
    for key, w in tree.items():
        label = json.loads(key) if isinstance(key, str) and key.strip().lstrip("-").isdigit() else key
        if label not in domain:
            raise ConfigError(f"{path}.{key}: {label!r} is not an input symbol")
        weights[label] = parse_number(w, f"{path}.{key}")
    total = sum(weights.values())
    if total != 1:
        raise ConfigError(f"{path}: weights sum to {total}, not 1")
    return FiniteDist.from_mapping(weights, domain)


# ---------------------------------------------------------------------------
# protocol builders

def _edges(tree, path: str, k: int, default):
    raw = tree.get("edges", default)
    try:
        edges = frozenset(tuple(int(a) for a in e) for e in raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.edges: expected a list of [source, target] pairs") from None
    try:
        return CommDag(k, edges)
    except ProtocolError as exc:
        raise ConfigError(f"{path}.edges: {exc}") from None


def _chain(k: int):
    return [[j, j + 1] for j in range(1, k)]


def _build_randomized_response(tree, path):
    n = int(_get(tree, "users", path))
    eps = parse_number(_get(tree, "message_epsilon", path), f"{path}.message_epsilon", allow_log=True)
    rr = cb.randomized_response(eps)
    r = cb.independent_randomizer((0, 1), [rr, rr], name="rr-pair")
    return Protocol((r,) * n, (cb.sum_server(), cb.sum_server()), _edges(tree, path, 2, [[1, 2]]),
                    name=tree.get("name", "rr-two-server"))


def _build_additive_shares(tree, path):
    n = int(_get(tree, "users", path))
    k = int(_get(tree, "servers", path))
    modulus = int(_get(tree, "modulus", path))
    pre = None
    if "message_epsilon" in tree:
        eps = parse_number(tree["message_epsilon"], f"{path}.message_epsilon", allow_log=True)
        pre = cb.randomized_response(eps)
    r = cb.additive_share_randomizer((0, 1), k, modulus, pre=pre)
    servers = tuple(cb.sum_server(modulus) for _ in range(k))
    default = [[j, k] for j in range(1, k)]
    return Protocol((r,) * n, servers, _edges(tree, path, k, default), name=tree.get("name", "additive-shares"))


def _build_clear_text(tree, path):
    n = int(_get(tree, "users", path))
    k = int(tree.get("servers", 2))
    r = cb.clear_randomizer((0, 1), k)
    servers = tuple(cb.sum_server() for _ in range(k))
    return Protocol((r,) * n, servers, _edges(tree, path, k, _chain(k)), name=tree.get("name", "clear-text"))


def _build_counting(tree, path):
    params = counting_params(tree, path)
    return counting_protocol(params)


def counting_params(tree, path="protocol") -> CountingParams:
    n = int(_get(tree, "users", path))
    eps = parse_number(_get(tree, "epsilon", path), f"{path}.epsilon")
    delta = parse_number(_get(tree, "delta", path), f"{path}.delta")
    base = CountingParams.from_budget(n, float(eps), float(delta))
    t = int(tree.get("t", base.t))
    try:
        return CountingParams(n, t, base.epsilon, base.delta, base.noise_epsilon)
    except ValueError as exc:
        raise ConfigError(f"{path}.t: {exc}") from None


_SERVERS = {
    "sum": lambda t: cb.sum_server(t.get("modulus")),
    "forward": lambda t: cb.forward_server(),
    "constant": lambda t: cb.constant_server(t.get("value", 0)),
}


def _build_table(tree, path):
    domain = tuple(_label(v) for v in _get(tree, "domain", path))
    users = _get(tree, "randomizers", path)
    if not isinstance(users, list) or not users:
        raise ConfigError(f"{path}.randomizers: expected a non-empty list")
    rands = []
    for i, table in enumerate(users):
        upath = f"{path}.randomizers[{i}]"
        parsed = {}
        for x in domain:
            key = json.dumps(x) if not isinstance(x, str) else x
            rows = table.get(key, table.get(str(x)))
            if rows is None:
                raise ConfigError(f"{upath}: no row for input {x!r}")
            parsed[x] = {tuple(_label(v) for v in msg): parse_number(w, f"{upath}.{key}") for msg, w in rows}
        try:
            rands.append(cb.table_randomizer(domain, parsed, name=f"user{i + 1}"))
        except ValueError as exc:
            raise ConfigError(f"{upath}: {exc}") from None
    servers = []
    for j, s in enumerate(_get(tree, "servers", path)):
        kind = s.get("kind")
        if kind not in _SERVERS:
            raise ConfigError(f"{path}.servers[{j}].kind: unknown server kind {kind!r}")
        servers.append(_SERVERS[kind](s))
    k = len(servers)
    try:
        return Protocol(tuple(rands), tuple(servers), _edges(tree, path, k, _chain(k)), name=tree.get("name", "table"))
    except ProtocolError as exc:
        raise ConfigError(f"{path}: {exc}") from None


BUILDERS = {
    "randomized-response": _build_randomized_response,
    "additive-shares": _build_additive_shares,
    "clear-text": _build_clear_text,
    "counting": _build_counting,
    "table": _build_table,
}


def build_protocol(tree: dict, path: str = "protocol") -> Protocol:
    if not isinstance(tree, dict):
        raise ConfigError(f"{path}: expected an object")
    kind = tree.get("kind")
    if kind not in BUILDERS:
        raise ConfigError(f"{path}.kind: unknown protocol kind {kind!r} (choose from {sorted(BUILDERS)})")
    return BUILDERS[kind](tree, path)


# ---------------------------------------------------------------------------
# scenario

@dataclass
class ScenarioConfig:
    name: str
    protocol_tree: dict
    epsilon: Any
    delta: Any = 0
    beta: Any = 0.1
    prior_tree: Any = "uniform"
    audits: list = field(default_factory=list)
    trials: int = 2000
    seed: int = 0
    ceiling: int = DEFAULT_CEILING
    inputs: list | None = None
    max_corrupt_servers: int | None = None
    privacy_stream_extra: int = 3
    description: str = ""

    def __post_init__(self):
        self.protocol = build_protocol(self.protocol_tree)
        dom = self.protocol.input_domain
        self.prior = parse_prior(self.prior_tree, "prior", dom.elements if dom is not None else (0, 1))
        if self.inputs is not None:
            if len(self.inputs) != self.protocol.n:
                raise ConfigError(f"inputs: expected {self.protocol.n} values, got {len(self.inputs)}")
            for i, x in enumerate(self.inputs):
                if dom is not None and _label(x) not in dom:
                    raise ConfigError(f"inputs[{i}]: {x!r} is not an input symbol")
        if self.max_corrupt_servers is None:
            self.max_corrupt_servers = math.ceil(self.protocol.k / 2)

    @property
    def input_vector(self) -> tuple:
        if self.inputs is not None:
            return tuple(_label(x) for x in self.inputs)
        return tuple(self.protocol.input_domain.elements[0] for _ in range(self.protocol.n))

    @classmethod
    def from_dict(cls, tree: dict) -> "ScenarioConfig":
        if not isinstance(tree, dict):
            raise ConfigError("scenario: expected an object")
        known = {"name", "protocol", "epsilon", "delta", "beta", "prior", "audits", "trials", "seed",
                 "ceiling", "inputs", "max_corrupt_servers", "privacy_stream_extra", "description"}
        unknown = sorted(set(tree) - known)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown field")
        audits = tree.get("audits", [])
        if not isinstance(audits, list):
            raise ConfigError("audits: expected a list of claim identifiers")
        return cls(
            name=tree.get("name", "scenario"),
            protocol_tree=_get(tree, "protocol", "scenario"),
            epsilon=parse_number(_get(tree, "epsilon", "scenario"), "epsilon", allow_log=True),
            delta=parse_number(tree.get("delta", 0), "delta"),
            beta=parse_number(tree.get("beta", 0.1), "beta"),
            prior_tree=tree.get("prior", "uniform"),
            audits=list(audits),
            trials=int(tree.get("trials", 2000)),
            seed=int(tree.get("seed", 0)),
            ceiling=int(tree.get("ceiling", DEFAULT_CEILING)),
            inputs=tree.get("inputs"),
            max_corrupt_servers=tree.get("max_corrupt_servers"),
            privacy_stream_extra=int(tree.get("privacy_stream_extra", 3)),
            description=tree.get("description", ""),
        )


def load_config(path) -> ScenarioConfig:
    try:
        tree = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config: file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: not valid JSON ({exc})") from None
    return ScenarioConfig.from_dict(tree)


def builtin_names() -> list:
    folder = resources.files("multiserver_dp") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_builtin(name: str) -> ScenarioConfig:
    folder = resources.files("multiserver_dp") / "scenarios"
    target = folder / f"{name}.json"
    if not target.is_file():
        raise ConfigError(f"scenario: unknown built-in {name!r} (choose from {builtin_names()})")
    return ScenarioConfig.from_dict(json.loads(target.read_text()))
