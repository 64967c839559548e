"""Compiling non-interactive multi-server protocols into online algorithms."""
from .budget import TransformBudget, sample_budget, tail_sample_count, tight_sample_count
from .compile import CompiledProtocol, transform_protocol
from .pipeline import (
    BUDGET_EXHAUSTED,
    HybridProtocol,
    RejectionSampler,
    ResamplingProtocol,
    SamplerOptions,
    TwoServerParts,
    build_m1,
    build_m2,
    build_m3,
)
from .purify import PurificationError, PurifiedRandomizer, purify
from .reduction import TwoServerReduction, reduce_k_to_2

__all__ = [
    "BUDGET_EXHAUSTED", "CompiledProtocol", "HybridProtocol", "PurificationError", "PurifiedRandomizer",
    "RejectionSampler", "ResamplingProtocol", "SamplerOptions", "TransformBudget", "TwoServerParts",
    "TwoServerReduction", "build_m1", "build_m2", "build_m3", "purify", "reduce_k_to_2", "sample_budget",
    "tail_sample_count", "tight_sample_count", "transform_protocol",
]
