"""Online algorithms ``(init, update, out)`` and internal-privacy auditing."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .prob import (
    ClosenessReport,
    Domain,
    EnumerationLimitError,
    FiniteDist,
    align,
    check_closeness,
    sample,
)
from .protocol import DEFAULT_CEILING


@dataclass(frozen=True, eq=False)
class OnlineAlgorithm:
    """States must be hashable.  ``update(i, state, x)`` uses 1-based ``i``."""

    init: Callable[[], FiniteDist]
    update: Callable[[int, Any, Any], FiniteDist]
    out: Callable[[Any], FiniteDist]
    length: int
    input_domain: Domain | None = None
    name: str = "online"


@dataclass(frozen=True)
class StateSnapshot:
    t: int
    state: Any


def _check_stream(alg: OnlineAlgorithm, xs: Sequence, full: bool = True):
    if full and len(xs) != alg.length:
        raise ValueError(f"{alg.name}: stream has length {len(xs)}, expected {alg.length}")
    if len(xs) > alg.length:
        raise ValueError(f"{alg.name}: stream longer than {alg.length}")


def run_online(alg: OnlineAlgorithm, xs: Sequence, rng: np.random.Generator, trace: bool = False):
    """Execute once.  Returns ``(z_out, snapshots)``; snapshots is ``None``
    unless ``trace`` is set."""
    _check_stream(alg, xs)
    state = sample(alg.init(), rng)
    snaps = [StateSnapshot(0, state)] if trace else None
    for i, x in enumerate(xs, 1):
        state = sample(alg.update(i, state, x), rng)
        if trace:
            snaps.append(StateSnapshot(i, state))
    return sample(alg.out(state), rng), snaps


def _step(alg, dist: FiniteDist, i: int, x, cache: dict, ceiling: int) -> FiniteDist:
    def kernel(s):
        key = (i, s, x)
        if key not in cache:
            cache[key] = alg.update(i, s, x)
        return cache[key]

    out = dist.bind(kernel)
    if len(out.domain) > ceiling:
        raise EnumerationLimitError(f"state space exceeds {ceiling} atoms")
    return out


def state_distribution(alg: OnlineAlgorithm, xs: Sequence, t: int, ceiling: int = DEFAULT_CEILING) -> FiniteDist:
    """Exact law of ``S_t``; only ``xs[:t]`` is read."""
    _check_stream(alg, xs, full=False)
    if not 0 <= t <= alg.length:
        raise ValueError(f"intrusion time {t} outside [0, {alg.length}]")
    if t > len(xs):
        raise ValueError("stream prefix shorter than the intrusion time")
    dist, cache = alg.init(), {}
    for i in range(1, t + 1):
        dist = _step(alg, dist, i, xs[i - 1], cache, ceiling)
    return dist


def stream_state_distribution(alg: OnlineAlgorithm, prior: FiniteDist, t: int,
                              ceiling: int = DEFAULT_CEILING) -> FiniteDist:
    """Law of ``S_t`` when every stream element is drawn i.i.d. from ``prior``."""
    dist, cache = alg.init(), {}
    for i in range(1, t + 1):
        dist = dist.bind(lambda s, i=i: prior.bind(lambda x: _cached_update(alg, cache, i, s, x)))
        if len(dist.domain) > ceiling:
            raise EnumerationLimitError(f"state space exceeds {ceiling} atoms")
    return dist


def _cached_update(alg, cache, i, s, x):
    key = (i, s, x)
    if key not in cache:
        cache[key] = alg.update(i, s, x)
    return cache[key]


def output_distribution(alg: OnlineAlgorithm, xs: Sequence, ceiling: int = DEFAULT_CEILING) -> FiniteDist:
    _check_stream(alg, xs)
    return state_distribution(alg, xs, alg.length, ceiling).bind(alg.out)


def stream_output_distribution(alg: OnlineAlgorithm, prior: FiniteDist,
                               ceiling: int = DEFAULT_CEILING) -> FiniteDist:
    """Law of ``alg(D^m)``."""
    return stream_state_distribution(alg, prior, alg.length, ceiling).bind(alg.out)


@dataclass
class IntrusionCell:
    position: int          # 1-based index where the neighbours differ
    t: int                 # intrusion time
    x: tuple               # stream prefix of length t
    x_prime: tuple
    report: ClosenessReport
    laws: tuple | None = None  # the two snapshot laws, when requested


@dataclass
class InternalPrivacyReport:
    epsilon: Any
    delta: Any
    satisfied: bool
    worst: IntrusionCell | None
    cells: list

    @property
    def max_delta(self):
        return self.worst.report.worst_delta if self.worst else 0

    def violations(self) -> list:
        return [c for c in self.cells if not c.report.satisfied]


def check_internal_privacy(alg: OnlineAlgorithm, epsilon, delta, input_domain: Domain | None = None,
                           positions: Iterable[int] | None = None, times: Iterable[int] | None = None,
                           ceiling: int = DEFAULT_CEILING, keep_laws: bool = False) -> InternalPrivacyReport:
    """Check ``S_t(x) ~(eps, delta) S_t(x')`` for every replace-one pair and every ``t``.

    ``S_t`` depends only on the first ``t`` inputs, so the check walks a
    prefix trie: every prefix distribution is built once from its parent, and
    pairs differing at ``i > t`` (identical states) are skipped.
    """
    domain = input_domain or alg.input_domain
    if domain is None:
        raise ValueError("an input domain is required")
    positions = set(positions) if positions is not None else None
    times = sorted(set(times)) if times is not None else list(range(alg.length + 1))
    cache: dict = {}
    level = {(): alg.init()}
    cells, worst = [], None
    for t in range(0, alg.length + 1):
        if t > 0:
            level = {pre + (x,): _step(alg, d, t, x, cache, ceiling)
                     for pre, d in level.items() for x in domain}
            if len(level) > ceiling:
                raise EnumerationLimitError(f"prefix trie exceeds {ceiling} nodes")
        if t not in times:
            continue
        for pre, dist in level.items():
            for i in range(1, t + 1):
                if positions is not None and i not in positions:
                    continue
                for alt in domain.elements[domain.index[pre[i - 1]] + 1:]:
                    other = pre[:i - 1] + (alt,) + pre[i:]
                    a, b = align(dist, level[other])
                    rep = check_closeness(a, b, epsilon, delta)
                    cell = IntrusionCell(i, t, pre, other, rep, (a, b) if keep_laws else None)
                    cells.append(cell)
                    if worst is None or rep.worst_delta > worst.report.worst_delta:
                        worst = cell
    satisfied = worst is None or worst.report.satisfied
    return InternalPrivacyReport(epsilon, delta, satisfied, worst, cells)
