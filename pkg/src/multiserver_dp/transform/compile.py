"""End-to-end compilation of a k-server protocol into an online algorithm."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..online import OnlineAlgorithm
from ..prob import exp_exact
from ..protocol import Protocol, marginal
from .budget import TransformBudget, sample_budget
from .pipeline import RejectionSampler, SamplerOptions, TwoServerParts
from .purify import PurifiedRandomizer, purify
from .reduction import TwoServerReduction, reduce_k_to_2


@dataclass(eq=False)
class CompiledProtocol:
    source: Protocol
    reduction: TwoServerReduction
    purified: list                  # one PurifiedRandomizer per user
    budget: TransformBudget
    sampler: RejectionSampler
    epsilon: object
    delta: object

    @property
    def algorithm(self) -> OnlineAlgorithm:
        return self.sampler.algorithm(f"{self.source.name}/online")

    @property
    def parts(self) -> TwoServerParts:
        return self.sampler.parts

    def target_privacy(self):
        """``(7 eps, 3 e^{5 eps} delta)``: the internal-privacy level to audit against."""
        e5 = exp_exact(5 * self.epsilon)
        factor = e5 if e5 is not None else math.exp(5 * float(self.epsilon))
        return 7 * self.epsilon, 3 * factor * self.delta

    def describe(self) -> dict:
        return {
            "source": self.source.name,
            "servers": self.source.k,
            "users": self.source.n,
            "grouping": [list(g) for g in self.reduction.grouping],
            "cross_edges": [list(e) for e in self.reduction.cross_edges],
            "stream_length": self.budget.m,
            "extra_samples": self.budget.v,
            "acceptance_floor": str(self.budget.ell),
            "purification": [{"solved": pr.solved, "max_distance": str(pr.max_distance), "notes": list(pr.notes)}
                             for pr in self.purified],
            "support_mismatches": len(self.parts.mismatches),
        }


def transform_protocol(p: Protocol, epsilon, delta, beta, stream_length: int | None = None,
                       options: SamplerOptions = SamplerOptions()) -> CompiledProtocol:
    """Reduce to two servers, purify first-message channels, attach the
    rejection sampler.  ``stream_length`` overrides the budgeted ``m`` (it must
    still be at least ``n``); audits use it to keep enumeration small."""
    red = reduce_k_to_2(p)
    two = red.protocol
    purified: list[PurifiedRandomizer] = [purify(marginal(r, [1]), epsilon, delta) for r in two.randomizers]
    budget = sample_budget(two.n, epsilon, beta)
    m = budget.m if stream_length is None else stream_length
    sampler = RejectionSampler(TwoServerParts(two, purified), m, options)
    return CompiledProtocol(p, red, purified, budget, sampler, epsilon, delta)
