"""Principle-of-common-cause verdicts and the two-copy common-cause extension.

The extension treats the cause ``C`` as a latent binary class.  Writing
``g = P(C)`` and ``d, d'`` for how strongly ``C`` lifts ``E`` and ``F``::

    P(E|C)  = P(E) + (1-g) d      P(E|~C) = P(E) - g d
    P(F|C)  = P(F) + (1-g) d'     P(F|~C) = P(F) - g d'

reproduces every cell of the ``E``/``F`` table exactly as long as
``g (1-g) d d' = cov(E, F)``.  Box constraints on the four conditionals turn
into a closed interval of admissible ``g``; we take the point closest to 1/2,
which maximizes ``P(C) P(~C)``, then the most even split of ``d`` and ``d'``.
No iterative solver is needed and rational inputs stay rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .errors import ArityError, NoSolutionError, PreconditionError
from .prob_core import (
    DEFAULT_TOL,
    CheckReport,
    Event,
    Partition,
    ProbabilitySpace,
    build_report,
    correlation,
    partition_screening_items,
    reichenbach_check,
)

#: denominator cap when a square root has to be rationalized
SQRT_DENOMINATOR = 10**6


@dataclass(frozen=True)
class CorrelationFamily:
    space: ProbabilitySpace
    pairs: tuple[tuple[Event, Event], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((e, f) for e, f in self.pairs))
        for e, f in self.pairs:
            self.space.check(e)
            self.space.check(f)

    def correlations(self) -> list:
        return [correlation(self.space, e, f) for e, f in self.pairs]

    def correlated_indices(self, tol: float = DEFAULT_TOL) -> list[int]:
        return [i for i, c in enumerate(self.correlations()) if abs(c) > tol]


@dataclass(frozen=True)
class SpaceEmbedding:
    """Measure-preserving map sending each source atom to a set of target atoms."""

    source: ProbabilitySpace
    target: ProbabilitySpace
    atom_map: Mapping

    def push(self, e: Event) -> Event:
        self.source.check(e)
        out: set = set()
        for label in e.labels:
            out |= self.atom_map[label]
        return Event(frozenset(out), e.name)

    def compose(self, then: "SpaceEmbedding") -> "SpaceEmbedding":
        """First ``self`` then ``then``."""
        if then.source != self.target:
            raise PreconditionError("embeddings do not chain")
        amap = {}
        for label, image in self.atom_map.items():
            out: set = set()
            for mid in image:
                out |= then.atom_map[mid]
            amap[label] = frozenset(out)
        return SpaceEmbedding(self.source, then.target, amap)

    @classmethod
    def identity(cls, space: ProbabilitySpace) -> "SpaceEmbedding":
        return cls(space, space, {l: frozenset([l]) for l in space.labels})

    def verify(self, tol: float = 1e-12) -> CheckReport:
        from .prob_core import equality_item

        items = []
        seen: set = set()
        disjoint = True
        for label, image in self.atom_map.items():
            if seen & image:
                disjoint = False
            seen |= image
            lhs = self.source.weight(label)
            ws = [self.target.weight(t) for t in image]
            rhs = sum(ws, self.target.zero()) if self.target.exact else math.fsum(ws)
            items.append(equality_item((str(label),), lhs, rhs, tol, note="measure"))
        flags = [] if disjoint and seen == self.target.label_set else ["images-not-a-partition"]
        rep = build_report("embedding", items, tol, flags=flags)
        if flags:
            return CheckReport(rep.condition, False, max(rep.max_residual, math.inf), tol, rep.witnesses, (), tuple(flags))
        return rep

    def to_json_obj(self) -> dict:
        return {str(k): sorted(map(str, v)) for k, v in self.atom_map.items()}


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


def weak_pcc_check(fam: CorrelationFamily, partitions: Sequence[Partition], tol: float = DEFAULT_TOL) -> CheckReport:
    """Each correlated pair has its own screening partition."""
    if len(partitions) != len(fam.pairs):
        raise ArityError(f"{len(fam.pairs)} pairs but {len(partitions)} partitions")
    items, skipped = [], []
    correlated = set(fam.correlated_indices(tol))
    for m, ((e, f), part) in enumerate(zip(fam.pairs, partitions)):
        if m not in correlated:
            continue
        part.validate(fam.space)
        its, sk = partition_screening_items(fam.space, part, e, f, tol, tag=f"pair{m}:")
        items += its
        skipped += sk
    return build_report(
        "weak_pcc",
        items,
        tol,
        skipped=skipped,
        details={"correlated_pairs": sorted(correlated)},
    )


def strong_pcc_check(fam: CorrelationFamily, part: Partition, tol: float = DEFAULT_TOL) -> CheckReport:
    """A single partition screens off every correlated pair."""
    part.validate(fam.space)
    items, skipped = [], set()
    correlated = fam.correlated_indices(tol)
    for m in correlated:
        e, f = fam.pairs[m]
        its, sk = partition_screening_items(fam.space, part, e, f, tol, tag=f"pair{m}:")
        items += its
        skipped.update(s.split(":", 1)[1] for s in sk)
    return build_report(
        "strong_pcc",
        items,
        tol,
        skipped=sorted(skipped),
        details={"correlated_pairs": correlated},
    )


# ---------------------------------------------------------------------------
# the extension
# ---------------------------------------------------------------------------


def _rational_sqrt(x: Fraction) -> Fraction:
    n, d = x.numerator, x.denominator
    rn, rd = math.isqrt(n), math.isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return Fraction(math.sqrt(x)).limit_denominator(SQRT_DENOMINATOR)


@dataclass(frozen=True)
class LatentSplit:
    """Parameters of a two-class cause: P(C) and the four conditionals."""

    p_cause: object
    e_given_c: object
    e_given_not_c: object
    f_given_c: object
    f_given_not_c: object


def balanced_split(pe, pf, cov) -> LatentSplit:
    """Most balanced latent cause for a positively correlated pair.

    ``pe``, ``pf``, ``cov`` are all Fractions or all floats.
    """
    if not cov > 0:
        raise PreconditionError("balanced_split needs positive covariance")
    one = type(cov)(1)
    half = one / 2
    lo = cov / ((one - pe) * (one - pf) + cov)
    hi = pe * pf / (pe * pf + cov)
    g = min(max(half, lo), hi)
    de = min((one - pe) / (one - g), pe / g)
    df = min((one - pf) / (one - g), pf / g)
    k = cov / (g * (one - g))
    s = _rational_sqrt(k) if isinstance(k, Fraction) else math.sqrt(k)
    if s > de:
        d, dp = de, k / de
    elif k / s > df:
        d, dp = k / df, df
    else:
        d, dp = s, k / s
    return LatentSplit(g, pe + (one - g) * d, pe - g * d, pf + (one - g) * dp, pf - g * dp)


def _copy_label(label, k: int):
    return f"{label}#{k}"


def extend_with_common_cause(
    space: ProbabilitySpace,
    e: Event,
    f: Event,
    tol: float = DEFAULT_TOL,
) -> tuple[ProbabilitySpace, SpaceEmbedding, Event]:
    """Double the space so that copy 1 is a Reichenbachian common cause of ``e`` and ``f``.

    Anticorrelated pairs get a cause that raises ``e`` and lowers ``f``.
    """
    space.check(e)
    space.check(f)
    pe, pf = space.prob(e), space.prob(f)
    if not (0 < pe < 1 and 0 < pf < 1):
        raise PreconditionError("both events need probability strictly between 0 and 1")
    cov = correlation(space, e, f)
    if cov == 0:
        raise PreconditionError("events are uncorrelated; there is nothing to explain")
    flip = cov < 0
    f_eff = space.complement(f) if flip else f
    pf_eff = space.prob(f_eff)
    split = balanced_split(pe, pf_eff, abs(cov))
    g = split.p_cause

    one = type(g)(1)
    ecell = {True: split.e_given_c, False: one - split.e_given_c}
    fcell = {True: split.f_given_c, False: one - split.f_given_c}
    cells: dict[tuple[bool, bool], object] = {}
    for label, w in space:
        key = (label in e.labels, label in f_eff.labels)
        cells[key] = cells.get(key, space.zero()) + w

    atoms = []
    amap = {}
    second = []
    for label, w in space:
        i, j = label in e.labels, label in f_eff.labels
        p_ij = cells[(i, j)]
        if p_ij == 0:
            w1 = space.zero()
        else:
            w1 = w * (g * ecell[i] * fcell[j]) / p_ij
        w2 = w - w1
        if not space.exact:
            w1, w2 = max(w1, 0.0), max(w2, 0.0)
        atoms.append((_copy_label(label, 1), w1))
        second.append((_copy_label(label, 2), w2))
        amap[label] = frozenset([_copy_label(label, 1), _copy_label(label, 2)])
    target = ProbabilitySpace(atoms + second)
    emb = SpaceEmbedding(space, target, amap)
    cause = Event(frozenset(a for a, _ in atoms), name="C")

    rep = reichenbach_check(target, cause, emb.push(e), emb.push(f), tol, signed=True)
    if not rep.holds:
        raise NoSolutionError(
            f"extension failed re-verification (residual {rep.max_residual:.3g})", rep.max_residual
        )
    return target, emb, cause


def iterate_extensions(
    fam: CorrelationFamily,
    tol: float = DEFAULT_TOL,
    *,
    return_embedding: bool = False,
):
    """Extend once per pair, in order, pushing earlier causes forward.

    Returns ``(space, causes)`` or ``(space, causes, embedding)`` where the
    embedding maps the original space into the final one.
    """
    space = fam.space
    total = SpaceEmbedding.identity(space)
    causes: list[Event] = []
    for m, (e, f) in enumerate(fam.pairs):
        e_now, f_now = total.push(e), total.push(f)
        new_space, step, cause = extend_with_common_cause(space, e_now, f_now, tol)
        causes = [step.push(c) for c in causes]
        causes.append(Event(cause.labels, name=f"C{m}"))
        total = total.compose(step)
        space = new_space
    causes = [Event(c.labels, name=f"C{i}") for i, c in enumerate(causes)]
    if return_embedding:
        return space, causes, total
    return space, causes
