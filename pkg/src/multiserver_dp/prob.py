"""Exact finite discrete probability.

Distributions carry ``fractions.Fraction`` weights whenever they are built from
exact inputs; floats are only used on Monte-Carlo paths.  Privacy parameters
may be plain floats or :class:`LogRational` values (``eps = ln(r)`` with ``r``
rational), in which case ``e**eps`` is known exactly and closeness verdicts
carry no rounding at all.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import accumulate
from numbers import Rational
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

import mpmath
import numpy as np

FLOAT_TOL = 1e-9


class DomainMismatchError(ValueError):
    """Two distributions that must share a domain do not."""


class ZeroMassError(ValueError):
    """Conditioning on (or observing) an event of probability zero."""


class EnumerationLimitError(RuntimeError):
    """Exact enumeration would exceed the configured atom ceiling."""


# ---------------------------------------------------------------------------
# privacy parameters

class LogRational(float):
    """``ln(base)`` for a rational ``base >= 1``, remembering ``base`` exactly.

    Integer multiples and sums of ``LogRational`` values stay exact, so
    ``7 * ln(2)`` still knows that its exponential is ``128``.
    """

    base: Fraction

    def __new__(cls, base):
        base = Fraction(base)
        if base < 1:
            raise ValueError("LogRational requires base >= 1 (epsilon >= 0)")
        obj = super().__new__(cls, math.log(base.numerator) - math.log(base.denominator))
        obj.base = base
        return obj

    def __mul__(self, other):
        if isinstance(other, int) and not isinstance(other, bool) and other >= 0:
            return LogRational(self.base ** other)
        return float(self) * other

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, LogRational):
            return LogRational(self.base * other.base)
        return float(self) + other

    __radd__ = __add__

    def __repr__(self):
        return f"ln({self.base})"

    def __reduce__(self):
        return (LogRational, (self.base,))


def ln(base) -> LogRational:
    return LogRational(base)


def exp_exact(eps) -> Fraction | None:
    """``e**eps`` as a Fraction when it is rational and known, else ``None``."""
    if isinstance(eps, LogRational):
        return eps.base
    if eps == 0:
        return Fraction(1)
    return None


def exp_lower(eps) -> Fraction:
    """A rational lower bound on ``e**eps``, exact when possible.

    Using a lower bound makes every computed delta an upper bound on the true
    one, so rounding can only make a closeness verdict more conservative.
    """
    exact = exp_exact(eps)
    if exact is not None:
        return exact
    with mpmath.workdps(60):
        value = mpmath.exp(mpmath.mpf(float(eps)))
        scaled = int(mpmath.floor(value * mpmath.mpf(2) ** 160))
    return Fraction(scaled, 2 ** 160)


def exp_fraction(x: float, bits: int = 160) -> Fraction:
    """``e**x`` rounded down to a dyadic rational with ``bits`` fractional bits."""
    with mpmath.workdps(bits // 3 + 20):
        value = mpmath.exp(mpmath.mpf(x))
        return Fraction(int(mpmath.floor(value * mpmath.mpf(2) ** bits)), 2 ** bits)


# ---------------------------------------------------------------------------
# domains and distributions

# beyond this many labels, domains keep first-seen order instead of sorting
SORT_LIMIT = 20_000


def _ordered(labels: Iterable[Hashable]) -> tuple:
    labels = tuple(labels)
    if len(labels) > SORT_LIMIT:
        return labels
    try:
        return tuple(sorted(labels))
    except TypeError:
        return labels


@dataclass(frozen=True)
class Domain:
    """Non-empty ordered collection of distinct hashable labels."""

    elements: tuple

    def __post_init__(self):
        elements = tuple(self.elements)
        object.__setattr__(self, "elements", elements)
        if not elements:
            raise ValueError("a domain must be non-empty")
        if len(set(elements)) != len(elements):
            raise ValueError("domain labels must be distinct")

    @cached_property
    def index(self) -> dict:
        return {e: i for i, e in enumerate(self.elements)}

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __contains__(self, item):
        return item in self.index

    def same_labels(self, other: "Domain") -> bool:
        return len(self) == len(other) and all(e in other for e in self.elements)


def _as_weight(w):
    if type(w) is Fraction:
        return w
    return Fraction(w) if isinstance(w, (int, Rational)) else w


@dataclass(frozen=True)
class FiniteDist:
    """Probability mass function over an explicit finite :class:`Domain`."""

    domain: Domain
    weights: tuple

    def __post_init__(self):
        if not isinstance(self.domain, Domain):
            object.__setattr__(self, "domain", Domain(tuple(self.domain)))
        weights = tuple(map(_as_weight, self.weights))
        object.__setattr__(self, "weights", weights)
        if len(weights) != len(self.domain):
            raise ValueError("one weight per domain element is required")
        if all(type(w) is Fraction for w in weights):
            scale = math.lcm(*(w.denominator for w in weights))
            numerators = tuple(w.numerator * (scale // w.denominator) for w in weights)
            if any(a < 0 for a in numerators):
                raise ValueError("weights must be non-negative")
            if sum(numerators) != scale:
                raise ValueError(f"weights sum to {Fraction(sum(numerators), scale)}, not exactly 1")
            # integer numerators over a shared denominator, for fast exact comparisons
            object.__setattr__(self, "_scaled", (numerators, scale))
        elif any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        elif abs((total := sum(weights)) - 1) > FLOAT_TOL:
            raise ValueError(f"weights sum to {total}, not 1 within {FLOAT_TOL}")

    # -- constructors -------------------------------------------------------
    @classmethod
    def from_mapping(cls, mapping: Mapping[Any, Any], domain: Iterable | None = None) -> "FiniteDist":
        if domain is None:
            domain = Domain(_ordered(mapping))
        else:
            domain = domain if isinstance(domain, Domain) else Domain(tuple(domain))
            extra = [k for k in mapping if k not in domain]
            if extra:
                raise DomainMismatchError(f"labels {extra!r} are outside the domain")
        return cls(domain, tuple(mapping.get(e, 0) for e in domain))

    @classmethod
    def from_weights(cls, mapping: Mapping[Any, Any]) -> "FiniteDist":
        """Normalise non-negative (unnormalised) weights, dropping zeros."""
        total = sum(mapping.values())
        if total == 0:
            raise ZeroMassError("all weights are zero")
        return cls.from_mapping({k: w / total for k, w in mapping.items() if w != 0})

    @classmethod
    def point(cls, label) -> "FiniteDist":
        return cls(Domain((label,)), (Fraction(1),))

    @classmethod
    def uniform(cls, labels: Iterable) -> "FiniteDist":
        labels = tuple(labels)
        return cls(Domain(labels), (Fraction(1, len(labels)),) * len(labels))

    @classmethod
    def bernoulli(cls, p) -> "FiniteDist":
        """Distribution over ``(0, 1)`` with ``Pr[1] = p``."""
        p = Fraction(p) if isinstance(p, (int, Rational, str)) else p
        return cls(Domain((0, 1)), (1 - p, p))

    # -- queries ------------------------------------------------------------
    @property
    def exact(self) -> bool:
        return hasattr(self, "_scaled")

    def prob(self, label):
        i = self.domain.index.get(label)
        return 0 if i is None else self.weights[i]

    __getitem__ = prob

    def items(self):
        return zip(self.domain.elements, self.weights)

    def support(self) -> tuple:
        return tuple(e for e, w in self.items() if w != 0)

    def as_dict(self) -> dict:
        return {e: w for e, w in self.items() if w != 0}

    def mean(self):
        return sum(e * w for e, w in self.items())

    def variance(self):
        mu = self.mean()
        return sum((e - mu) ** 2 * w for e, w in self.items())

    def probability(self, event: Callable[[Any], bool] | Iterable):
        if callable(event):
            return sum(w for e, w in self.items() if event(e))
        return sum(self.prob(e) for e in set(event))

    # -- transformations ----------------------------------------------------
    def map(self, f: Callable[[Any], Hashable]) -> "FiniteDist":
        """Push-forward through a deterministic map."""
        out: dict = {}
        for e, w in self.items():
            if w:
                key = f(e)
                out[key] = out.get(key, 0) + w
        return FiniteDist.from_mapping(out)

    def relabel(self, f: Callable[[Any], Hashable]) -> "FiniteDist":
        """Push-forward through an injective map, reusing the weights as they are."""
        out = object.__new__(FiniteDist)
        object.__setattr__(out, "domain", Domain(tuple(map(f, self.domain.elements))))
        object.__setattr__(out, "weights", self.weights)
        if hasattr(self, "_scaled"):
            object.__setattr__(out, "_scaled", self._scaled)
        return out

    def bind(self, kernel: Callable[[Any], "FiniteDist"]) -> "FiniteDist":
        """Mixture ``sum_e P(e) * kernel(e)``."""
        out: dict = {}
        for e, w in self.items():
            if not w:
                continue
            for f, v in kernel(e).items():
                if v:
                    out[f] = out.get(f, 0) + w * v
        return FiniteDist.from_mapping(out)

    def extend(self, domain: Domain | Iterable) -> "FiniteDist":
        """Same pmf written over a larger domain (new labels get weight 0)."""
        domain = domain if isinstance(domain, Domain) else Domain(tuple(domain))
        return FiniteDist.from_mapping(self.as_dict(), domain)

    def to_float(self) -> "FiniteDist":
        return FiniteDist(self.domain, tuple(float(w) for w in self.weights))

    def product(self, other: "FiniteDist") -> "JointDist":
        """Independent joint distribution over pairs ``(a, b)``."""
        table = {(a, b): wa * wb for a, wa in self.items() if wa for b, wb in other.items() if wb}
        return JointDist.from_mapping(table)

    @cached_property
    def _cdf(self):
        return list(accumulate(float(w) for w in self.weights))

    def __repr__(self):
        body = ", ".join(f"{e!r}: {w}" for e, w in self.items() if w)
        return f"FiniteDist({{{body}}})"


class JointDist(FiniteDist):
    """A :class:`FiniteDist` whose labels are equal-length tuples."""

    def __post_init__(self):
        super().__post_init__()
        arities = {len(e) for e in self.domain.elements if isinstance(e, tuple)}
        if len(arities) != 1 or not all(isinstance(e, tuple) for e in self.domain.elements):
            raise ValueError("joint labels must be tuples of one common arity")

    @classmethod
    def from_mapping(cls, mapping, domain=None) -> "JointDist":
        base = FiniteDist.from_mapping(mapping, domain)
        return cls(base.domain, base.weights)

    @classmethod
    def product_of(cls, factors: Sequence[FiniteDist]) -> "JointDist":
        table: dict = {(): Fraction(1)}
        for factor in factors:
            table = {k + (e,): w * v for k, w in table.items() for e, v in factor.items() if v}
        return cls.from_mapping(table)

    @property
    def arity(self) -> int:
        return len(self.domain.elements[0])

    def marginal(self, coords: Sequence[int]) -> "JointDist":
        coords = tuple(coords)
        if not coords:
            raise ValueError("marginal needs at least one coordinate")
        dist = self.map(lambda e: tuple(e[c] for c in coords))
        return JointDist(dist.domain, dist.weights)


# ---------------------------------------------------------------------------
# comparisons

def align(p: FiniteDist, q: FiniteDist) -> tuple[FiniteDist, FiniteDist]:
    """Rewrite both distributions over the union of their domains."""
    if p.domain.same_labels(q.domain):
        return p, q
    labels = list(p.domain.elements) + [e for e in q.domain.elements if e not in p.domain]
    union = Domain(_ordered(labels))
    return p.extend(union), q.extend(union)


def _check_same_domain(p: FiniteDist, q: FiniteDist):
    if not p.domain.same_labels(q.domain):
        raise DomainMismatchError("distributions are over different domains")


def statistical_distance(p: FiniteDist, q: FiniteDist):
    """Total variation distance ``(1/2) * sum |p_i - q_i|``."""
    _check_same_domain(p, q)
    return sum(abs(w - q.prob(e)) for e, w in p.items()) / 2


@dataclass(frozen=True)
class ClosenessReport:
    """Outcome of testing ``P ~(eps, delta) Q`` with the exact optimal events.

    ``delta_forward`` is ``max_E P(E) - e^eps Q(E)``; ``delta_backward`` swaps
    the roles.  ``witness_event`` is the maximising event of the worse side.
    """

    epsilon: float
    delta: Any
    delta_forward: Any
    delta_backward: Any
    witness_forward: frozenset
    witness_backward: frozenset
    satisfied: bool

    @property
    def worst_delta(self):
        return max(self.delta_forward, self.delta_backward)

    @property
    def witness_event(self) -> frozenset:
        if self.delta_forward >= self.delta_backward:
            return self.witness_forward
        return self.witness_backward

    @property
    def slack(self):
        return self.delta - self.worst_delta


def _one_sided_exact(p: FiniteDist, q: FiniteDist, factor: Fraction):
    # integer numerators over each side's lcm denominator: no per-label Fractions
    pn, lp = p._scaled
    qn, lq = q._scaled
    a_mul, b_mul = lq * factor.denominator, lp * factor.numerator
    q_index = q.domain.index
    excess, event = 0, []
    for e, a in zip(p.domain.elements, pn):
        if a:
            j = q_index.get(e)
            gap = a * a_mul - (qn[j] * b_mul if j is not None else 0)
            if gap > 0:
                excess += gap
                event.append(e)
    return Fraction(excess, lp * a_mul), frozenset(event)


def _one_sided(p: FiniteDist, q: FiniteDist, factor):
    excess, event = 0, []
    for e, w in p.items():
        gap = w - factor * q.prob(e) if factor is not None else (w if q.prob(e) == 0 else 0)
        if gap > 0:
            excess += gap
            event.append(e)
    return excess, frozenset(event)


def check_closeness(p: FiniteDist, q: FiniteDist, epsilon, delta) -> ClosenessReport:
    """Decide ``P ~(epsilon, delta) Q`` exactly.

    The maximising event for ``Pr[P in E] - e^eps Pr[Q in E]`` is the set of
    labels where ``p_y > e^eps q_y``, so no subset enumeration is needed.
    ``epsilon = inf`` is allowed and leaves only the disjoint mass.
    """
    _check_same_domain(p, q)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    if math.isinf(epsilon):
        factor = None
    elif p.exact and q.exact:
        factor = exp_lower(epsilon)
    else:
        factor = math.exp(epsilon)
    side = _one_sided_exact if isinstance(factor, Fraction) else _one_sided
    fwd, ev_f = side(p, q, factor)
    bwd, ev_b = side(q, p, factor)
    if not (p.exact and q.exact):
        fwd, bwd = float(fwd), float(bwd)
    return ClosenessReport(
        epsilon=epsilon, delta=delta,
        delta_forward=fwd, delta_backward=bwd,
        witness_forward=ev_f, witness_backward=ev_b,
        satisfied=max(fwd, bwd) <= delta,
    )


# ---------------------------------------------------------------------------
# conditioning

def condition(joint: JointDist, coords: Sequence[int], value: Sequence) -> JointDist:
    """Distribution of the remaining coordinates given ``joint[coords] == value``."""
    coords, value = tuple(coords), tuple(value)
    if len(coords) != len(value):
        raise ValueError("coords and value must have equal length")
    rest = tuple(c for c in range(joint.arity) if c not in coords)
    if not rest:
        raise ValueError("conditioning on every coordinate leaves nothing")
    table: dict = {}
    for e, w in joint.items():
        if w and tuple(e[c] for c in coords) == value:
            key = tuple(e[c] for c in rest)
            table[key] = table.get(key, 0) + w
    mass = sum(table.values())
    if mass == 0:
        raise ZeroMassError(f"Pr[coords {coords} = {value}] is zero")
    return JointDist.from_mapping({k: w / mass for k, w in table.items()})


def posterior(prior: FiniteDist, channel: Callable[[Any], FiniteDist] | Mapping, observation) -> FiniteDist:
    """Bayes rule: ``Pr[x | y] ∝ prior(x) * channel(x)(y)`` over ``prior.domain``."""
    lookup = channel.__getitem__ if isinstance(channel, Mapping) else channel
    scores = {x: w * lookup(x).prob(observation) for x, w in prior.items()}
    total = sum(scores.values())
    if total == 0:
        raise ZeroMassError(f"observation {observation!r} has zero marginal probability")
    return FiniteDist.from_mapping({x: s / total for x, s in scores.items()}, prior.domain)


# ---------------------------------------------------------------------------
# sampling

def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_rngs(seed, count: int) -> list[np.random.Generator]:
    """Independent child streams split deterministically from one root seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(c) for c in children]


def sample(dist: FiniteDist, rng: np.random.Generator):
    cdf = dist._cdf
    u = rng.random() * cdf[-1]
    i = min(bisect.bisect_right(cdf, u), len(cdf) - 1)
    while dist.weights[i] == 0:  # u landed on a boundary shared with a zero-weight label
        i -= 1
    return dist.domain.elements[i]


def sample_many(dist: FiniteDist, rng: np.random.Generator, size) -> np.ndarray:
    """Vectorised draws of label *indices*; map through ``dist.domain`` as needed."""
    probs = np.array([float(w) for w in dist.weights])
    return rng.choice(len(probs), size=size, p=probs / probs.sum())
