"""Hybrid executors for a two-server protocol and the online rejection sampler.

* :class:`HybridProtocol` (``build_m1``) swaps each user's first message for
  the purified channel and draws the second message conditionally.
* :class:`ResamplingProtocol` (``build_m2``) draws the second message from a
  fresh posterior sample of the input instead of the real one.  It needs the
  input distribution, so it only exists as a reference for tests.
* :class:`RejectionSampler` (``build_m3``) realises the same posterior online:
  later stream elements are accepted as stand-in inputs by a coin whose bias
  is proportional to the likelihood of the already-published first message.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..online import OnlineAlgorithm, stream_state_distribution
from ..prob import (
    FiniteDist,
    JointDist,
    ZeroMassError,
    condition,
    posterior,
    sample,
)
from ..protocol import Protocol, ProtocolError, Randomizer, marginal, output_distribution, output_distribution_under


class _Exhausted:
    """Output emitted when the stream ends before every user was re-sampled."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "BUDGET_EXHAUSTED"

    def __reduce__(self):
        return (_Exhausted, ())

    def __lt__(self, other):
        return False

    def __gt__(self, other):
        return other is not self


BUDGET_EXHAUSTED = _Exhausted()


def _joint(dist: FiniteDist) -> JointDist:
    return JointDist(dist.domain, dist.weights)


class TwoServerParts:
    """Per-user channels of a two-server protocol, with optional purified
    first-message channels.  Keeps count of support-mismatch fallbacks."""

    def __init__(self, protocol: Protocol, purified: list | None = None):
        if protocol.k != 2:
            raise ProtocolError(f"expected a two-server protocol, got k={protocol.k}")
        if protocol.dag.out_neighbors(1) != (2,):
            raise ProtocolError("server 1 must send exactly one message, to server 2")
        self.protocol = protocol
        self.original_first = [marginal(r, [1]) for r in protocol.randomizers]
        if purified is None:
            self.first = list(self.original_first)
        else:
            self.first = [pr.purified if hasattr(pr, "purified") else pr for pr in purified]
        if len(self.first) != protocol.n:
            raise ProtocolError("one purified channel per user is required")
        self.mismatches: set = set()
        self._first_cache: dict = {}
        self._second_cache: dict = {}
        self._peak_cache: dict = {}

    @property
    def n(self) -> int:
        return self.protocol.n

    @property
    def domain(self):
        return self.protocol.input_domain

    # user-side channels, with scalar labels ---------------------------------
    def first_law(self, i: int, x) -> FiniteDist:
        key = (i, x)
        if key not in self._first_cache:
            self._first_cache[key] = self.first[i - 1](x).map(lambda t: t[0])
        return self._first_cache[key]

    def second_law(self, i: int, x, y) -> FiniteDist:
        """``R_{i,2}(x) | R_{i,1}(x) = y``; falls back to the unconditional
        second marginal when ``y`` is impossible under the original channel."""
        key = (i, x, y)
        if key not in self._second_cache:
            joint = self.protocol.randomizers[i - 1](x)
            try:
                law = condition(joint, [0], [y])
            except ZeroMassError:
                self.mismatches.add(key)
                law = joint.marginal([1])
            self._second_cache[key] = law.map(lambda t: t[0])
        return self._second_cache[key]

    def peak(self, i: int, y):
        """``max_u Pr[first(u) = y]`` over the whole input domain."""
        key = (i, y)
        if key not in self._peak_cache:
            self._peak_cache[key] = max(self.first_law(i, u).prob(y) for u in self.domain)
        return self._peak_cache[key]

    def rate(self, i: int, y, x, normalized: bool = True):
        num = self.first_law(i, x).prob(y)
        if not normalized:
            return num
        return num / (2 * self.peak(i, y))

    def reachable_messages(self, i: int) -> tuple:
        seen: dict = {}
        for u in self.domain:
            for y in self.first_law(i, u).support():
                seen[y] = None
        return tuple(seen)

    # server side ------------------------------------------------------------
    def server1_law(self, y1s: tuple) -> FiniteDist:
        server = self.protocol.servers[0]
        law = server(tuple(y1s), {})
        return law if server.broadcast else law.map(lambda lbl: lbl[0])

    def server2_law(self, z12, y2s: tuple) -> FiniteDist:
        return self.protocol.servers[1](tuple(y2s), {1: z12})


# ---------------------------------------------------------------------------
# hybrid executors

class HybridProtocol:
    """Purified first messages, second messages drawn conditionally on them."""

    def __init__(self, parts: TwoServerParts):
        self.parts = parts
        p = parts.protocol
        self.protocol = p.with_randomizers([self._randomizer(i) for i in range(1, p.n + 1)],
                                           name=f"{p.name}/hybrid")

    def _randomizer(self, i: int) -> Randomizer:
        parts = self.parts
        table = {x: _joint(parts.first_law(i, x).bind(
            lambda y, x=x: parts.second_law(i, x, y).map(lambda y2, y=y: (y, y2))))
            for x in parts.domain}
        return Randomizer(parts.domain, table, name=f"hybrid[{i}]")

    def output_distribution(self, xs) -> FiniteDist:
        return output_distribution(self.protocol, xs)

    def output_distribution_under(self, prior: FiniteDist) -> FiniteDist:
        return output_distribution_under(self.protocol, prior)

    def sample(self, xs, rng: np.random.Generator):
        parts = self.parts
        y1s = tuple(sample(parts.first_law(i, x), rng) for i, x in enumerate(xs, 1))
        y2s = tuple(sample(parts.second_law(i, x, y), rng) for i, (x, y) in enumerate(zip(xs, y1s), 1))
        z12 = sample(parts.server1_law(y1s), rng)
        return sample(parts.server2_law(z12, y2s), rng)


class ResamplingProtocol:
    """Second messages produced from a posterior re-sample of each input."""

    def __init__(self, parts: TwoServerParts, prior: FiniteDist):
        self.parts = parts
        self.prior = prior
        self._resample_cache: dict = {}
        p = parts.protocol
        self.protocol = p.with_randomizers([self._randomizer(i) for i in range(1, p.n + 1)],
                                           name=f"{p.name}/resampled")

    def input_posterior(self, i: int, y) -> FiniteDist:
        return posterior(self.prior, lambda x: self.parts.first_law(i, x), y)

    def resample_law(self, i: int, y) -> FiniteDist:
        key = (i, y)
        if key not in self._resample_cache:
            self._resample_cache[key] = self.input_posterior(i, y).bind(
                lambda xh: self.parts.second_law(i, xh, y))
        return self._resample_cache[key]

    def _randomizer(self, i: int) -> Randomizer:
        parts = self.parts

        def second(x, y):
            try:
                return self.resample_law(i, y)
            except ZeroMassError:
                # y never arises under the prior; keep the table total with the real input
                return parts.second_law(i, x, y)

        table = {x: _joint(parts.first_law(i, x).bind(
            lambda y, x=x: second(x, y).map(lambda y2, y=y: (y, y2))))
            for x in parts.domain}
        return Randomizer(parts.domain, table, name=f"resampled[{i}]")

    def output_distribution(self, xs) -> FiniteDist:
        return output_distribution(self.protocol, xs)

    def output_distribution_under(self, prior: FiniteDist | None = None) -> FiniteDist:
        return output_distribution_under(self.protocol, prior or self.prior)

    def sample(self, xs, rng: np.random.Generator):
        parts = self.parts
        y1s = tuple(sample(parts.first_law(i, x), rng) for i, x in enumerate(xs, 1))
        z12 = sample(parts.server1_law(y1s), rng)
        y2s = []
        for i, y in enumerate(y1s, 1):
            xh = sample(self.input_posterior(i, y), rng)
            y2s.append(sample(parts.second_law(i, xh, y), rng))
        return sample(parts.server2_law(z12, tuple(y2s)), rng)


# ---------------------------------------------------------------------------
# online rejection sampler

@dataclass(frozen=True)
class SamplerOptions:
    keep_bits: bool = True          # record accept/reject coins in the state
    erase: bool = True              # False keeps rates and consumed messages around
    normalize_rate: bool = True     # False drops the 2 * max_u denominator


class RejectionSampler:
    """Builds the online algorithm over a stream of length ``m >= n``.

    States: ``("read", y1s)`` during the first ``n`` steps, then
    ``("resample", z12, y2s, pending, bits, residue)`` where ``pending`` holds the
    first messages still waiting for a stand-in input.  ``residue`` stays empty
    unless erasure is switched off.
    """

    def __init__(self, parts: TwoServerParts, m: int, options: SamplerOptions = SamplerOptions()):
        if m < parts.n:
            raise ValueError(f"stream length {m} is shorter than the {parts.n} users")
        self.parts = parts
        self.m = m
        self.options = options

    @property
    def n(self) -> int:
        return self.parts.n

    def _enter_resample(self, y1s: tuple) -> FiniteDist:
        return self.parts.server1_law(y1s).map(lambda z: ("resample", z, (), y1s, (), ()))

    def init(self) -> FiniteDist:
        if self.n == 0:
            return self._enter_resample(())
        return FiniteDist.point(("read", ()))

    def update(self, h: int, state, x) -> FiniteDist:
        parts, opts = self.parts, self.options
        if state[0] == "read":
            def extend(y):
                y1s = state[1] + (y,)
                return FiniteDist.point(("read", y1s)) if h < self.n else self._enter_resample(y1s)
            return parts.first_law(h, x).bind(extend)
        _, z12, y2s, pending, bits, residue = state
        if not pending:
            return FiniteDist.point(state)
        i = len(y2s) + 1
        y = pending[0]
        rate = parts.rate(i, y, x, normalized=opts.normalize_rate)
        if not 0 <= rate <= 1:
            raise ValueError(f"acceptance rate {rate} is not a probability")
        kept = residue + ((h, "rate", rate),) if not opts.erase else residue
        out: dict = {}
        if rate < 1:
            reject = ("resample", z12, y2s, pending, bits + (0,) if opts.keep_bits else bits, kept)
            out[reject] = 1 - rate
        if rate > 0:
            acc_bits = bits + (1,) if opts.keep_bits else bits
            acc_residue = kept + ((h, "y1", y),) if not opts.erase else kept
            for y2, w in parts.second_law(i, x, y).items():
                if w:
                    s = ("resample", z12, y2s + (y2,), pending[1:], acc_bits, acc_residue)
                    out[s] = out.get(s, 0) + rate * w
        return FiniteDist.from_mapping(out)

    def out(self, state) -> FiniteDist:
        if state[0] == "read" or state[3]:
            return FiniteDist.point(BUDGET_EXHAUSTED)
        return self.parts.server2_law(state[1], state[2])

    def algorithm(self, name: str = "rejection-sampler") -> OnlineAlgorithm:
        return OnlineAlgorithm(self.init, self.update, self.out, self.m, self.parts.domain, name)

    def compact(self) -> "RejectionSampler":
        """Same output law with coins dropped from the state (smaller enumeration)."""
        opts = SamplerOptions(False, self.options.erase, self.options.normalize_rate)
        return RejectionSampler(self.parts, self.m, opts)

    # exact analysis -----------------------------------------------------------
    def acceptance_probability(self, i: int, y, prior: FiniteDist):
        """Chance that one fresh draw from ``prior`` is accepted for ``(i, y)``."""
        return sum(w * self.parts.rate(i, y, x, self.options.normalize_rate) for x, w in prior.items() if w)

    def accepted_sample_distribution(self, i: int, y, prior: FiniteDist) -> FiniteDist:
        """Law of the stand-in input given that it was accepted."""
        scores = {x: w * self.parts.rate(i, y, x, self.options.normalize_rate) for x, w in prior.items()}
        return FiniteDist.from_weights(scores).extend(prior.domain)

    def unbounded_output_distribution(self, prior: FiniteDist, tol=Fraction(1, 10 ** 15),
                                      max_steps: int = 100_000):
        """Exact law of the sampler with an endless stream, cut off once the
        still-running mass drops below ``tol``.

        Returns ``(law, residual)``; ``law`` puts the residual on
        :data:`BUDGET_EXHAUSTED`, so it is a proper distribution.
        """
        sampler = self.compact()
        dist = stream_state_distribution(
            OnlineAlgorithm(sampler.init, sampler.update, sampler.out, self.n), prior, self.n)
        running = dist.as_dict()
        finished: dict = {}
        h = self.n
        while True:
            for s in [s for s in running if s[0] == "resample" and not s[3]]:
                w = running.pop(s)
                for z, v in sampler.out(s).items():
                    finished[z] = finished.get(z, 0) + w * v
            residual = sum(running.values())
            if residual < tol or h >= max_steps:
                break
            h += 1
            nxt: dict = {}
            for s, w in running.items():
                for x, px in prior.items():
                    if px:
                        for s2, v in sampler.update(h, s, x).items():
                            nxt[s2] = nxt.get(s2, 0) + w * px * v
            running = nxt
        if residual:
            finished[BUDGET_EXHAUSTED] = finished.get(BUDGET_EXHAUSTED, 0) + residual
        return FiniteDist.from_mapping(finished), residual


def build_m1(p: Protocol, purified: list | None = None) -> HybridProtocol:
    return HybridProtocol(TwoServerParts(p, purified))


def build_m2(p: Protocol, prior: FiniteDist, purified: list | None = None) -> ResamplingProtocol:
    return ResamplingProtocol(TwoServerParts(p, purified), prior)


def build_m3(p: Protocol, budget, purified: list | None = None,
             options: SamplerOptions = SamplerOptions()) -> RejectionSampler:
    m = budget if isinstance(budget, int) else budget.m
    return RejectionSampler(TwoServerParts(p, purified), m, options)
