"""Finite probability spaces, events, partitions and screening-off checks.

Weights are kept as :class:`fractions.Fraction` whenever every input weight is
rational (``int``, ``Fraction`` or a ``"p/q"`` string); any float input switches
the whole space to doubles.  Exact spaces make zero-tolerance checks meaningful.

>>> s = ProbabilitySpace.from_dict({"ef": "17/50", "e~f": "4/25", "~ef": "4/25", "~e~f": "17/50"})
>>> e, f = s.event(["ef", "e~f"]), s.event(["ef", "~ef"])
>>> correlation(s, e, f)
Fraction(9, 100)
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Any, Hashable, Iterable, Iterator, Mapping, Sequence, Union

from .errors import (
    InvalidEventError,
    InvalidPartitionError,
    InvalidSpaceError,
    NullConditioningError,
)

log = logging.getLogger(__name__)

Number = Union[Fraction, float]
Label = Hashable

DEFAULT_TOL = 1e-9
NORMALIZATION_TOL = 1e-12


def _coerce_weight(w: Any) -> Number:
    if isinstance(w, bool):
        raise InvalidSpaceError(f"boolean is not a weight: {w!r}")
    if isinstance(w, Rational):
        return Fraction(w)
    if isinstance(w, str):
        try:
            return Fraction(w)
        except ValueError as exc:
            raise InvalidSpaceError(f"cannot parse weight {w!r}") from exc
    return float(w)


# ---------------------------------------------------------------------------
# events and partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Event:
    """A set of atom labels.  Validity is checked against a space on use."""

    labels: frozenset
    name: str | None = field(default=None, compare=False)

    @classmethod
    def of(cls, *labels: Label, name: str | None = None) -> "Event":
        return cls(frozenset(labels), name)

    def __and__(self, other: "Event") -> "Event":
        return Event(self.labels & other.labels)

    def __or__(self, other: "Event") -> "Event":
        return Event(self.labels | other.labels)

    def __sub__(self, other: "Event") -> "Event":
        return Event(self.labels - other.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[Label]:
        return iter(self.labels)

    def __contains__(self, label: object) -> bool:
        return label in self.labels

    def describe(self) -> str:
        if self.name:
            return self.name
        shown = sorted(map(str, self.labels))
        if len(shown) > 6:
            return "{" + ",".join(shown[:6]) + f",...+{len(shown) - 6}" + "}"
        return "{" + ",".join(shown) + "}"


@dataclass(frozen=True)
class Partition:
    cells: tuple[Event, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))

    def __iter__(self) -> Iterator[Event]:
        return iter(self.cells)

    def __len__(self) -> int:
        return len(self.cells)

    def validate(self, space: "ProbabilitySpace") -> "Partition":
        seen: set = set()
        for cell in self.cells:
            space.check(cell)
            if seen & cell.labels:
                raise InvalidPartitionError("partition cells overlap")
            seen |= cell.labels
        if seen != space.label_set:
            missing = len(space.label_set - seen)
            raise InvalidPartitionError(f"partition does not cover the space ({missing} atoms missing)")
        return self

    @classmethod
    def atomic(cls, space: "ProbabilitySpace") -> "Partition":
        return cls(tuple(Event(frozenset([l]), name=str(l)) for l in space.labels))

    @classmethod
    def trivial(cls, space: "ProbabilitySpace") -> "Partition":
        return cls((space.whole(),))

    @classmethod
    def binary(cls, space: "ProbabilitySpace", c: Event) -> "Partition":
        """The two-cell partition ``{C, not C}``."""
        space.check(c)
        return cls((c, space.complement(c)))

    @classmethod
    def refinement(cls, space: "ProbabilitySpace", events: Sequence[Event]) -> "Partition":
        """Common refinement of the binary partitions generated by ``events``."""
        cells: dict[tuple[bool, ...], set] = {}
        for label in space.labels:
            key = tuple(label in ev for ev in events)
            cells.setdefault(key, set()).add(label)
        out = []
        for key in sorted(cells, reverse=True):
            name = "".join("+" if k else "-" for k in key)
            out.append(Event(frozenset(cells[key]), name=name))
        return cls(tuple(out))


# ---------------------------------------------------------------------------
# the space itself
# ---------------------------------------------------------------------------


class ProbabilitySpace:
    """Finite sample space of weighted atoms.  Immutable after construction."""

    __slots__ = ("_labels", "_weights", "_index", "_exact", "_label_set")

    def __init__(self, atoms: Iterable[tuple[Label, Any]]):
        pairs = list(atoms)
        if not pairs:
            raise InvalidSpaceError("a probability space needs at least one atom")
        labels = tuple(p[0] for p in pairs)
        raw = [_coerce_weight(p[1]) for p in pairs]
        exact = all(isinstance(w, Fraction) for w in raw)
        weights = tuple(raw) if exact else tuple(float(w) for w in raw)
        if len(set(labels)) != len(labels):
            raise InvalidSpaceError("atom labels must be distinct")
        if any(w < 0 for w in weights):
            raise InvalidSpaceError("weights must be non-negative")
        total = sum(weights)
        if exact:
            if total != 1:
                raise InvalidSpaceError(f"weights sum to {total}, not 1")
        elif abs(total - 1.0) > NORMALIZATION_TOL:
            raise InvalidSpaceError(f"weights sum to {total!r}, not 1 within {NORMALIZATION_TOL}")
        self._labels = labels
        self._weights = weights
        self._exact = exact
        self._index = {l: i for i, l in enumerate(labels)}
        self._label_set = frozenset(labels)

    @classmethod
    def from_dict(cls, mapping: Mapping[Label, Any]) -> "ProbabilitySpace":
        return cls(mapping.items())

    @classmethod
    def normalized(cls, mapping: Mapping[Label, Any]) -> "ProbabilitySpace":
        """Build a space from non-negative masses, rescaling them to sum to one."""
        raw = {k: _coerce_weight(v) for k, v in mapping.items()}
        total = sum(raw.values())
        if total <= 0:
            raise InvalidSpaceError("total mass must be positive")
        return cls((k, v / total) for k, v in raw.items())

    # -- basic accessors --------------------------------------------------
    @property
    def labels(self) -> tuple:
        return self._labels

    @property
    def weights(self) -> tuple:
        return self._weights

    @property
    def exact(self) -> bool:
        return self._exact

    @property
    def label_set(self) -> frozenset:
        return self._label_set

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def __iter__(self) -> Iterator[tuple[Label, Number]]:
        return iter(zip(self._labels, self._weights))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProbabilitySpace):
            return NotImplemented
        return dict(self) == dict(other)

    def __hash__(self) -> int:
        return hash(frozenset(self))

    def __repr__(self) -> str:
        kind = "exact" if self._exact else "float"
        return f"ProbabilitySpace({len(self)} atoms, {kind})"

    def weight(self, label: Label) -> Number:
        try:
            return self._weights[self._index[label]]
        except KeyError:
            raise InvalidEventError(f"unknown atom label {label!r}") from None

    def zero(self) -> Number:
        return Fraction(0) if self._exact else 0.0

    # -- events -----------------------------------------------------------
    def check(self, e: Event) -> Event:
        if not e.labels <= self._label_set:
            bad = sorted(map(str, e.labels - self._label_set))[:5]
            raise InvalidEventError(f"event refers to unknown atoms: {bad}")
        return e

    def event(self, labels: Iterable[Label], name: str | None = None) -> Event:
        return self.check(Event(frozenset(labels), name))

    def whole(self) -> Event:
        return Event(self._label_set, "S")

    def empty(self) -> Event:
        return Event(frozenset(), "0")

    def complement(self, e: Event) -> Event:
        self.check(e)
        name = f"~{e.name}" if e.name else None
        return Event(self._label_set - e.labels, name)

    def where(self, predicate, name: str | None = None) -> Event:
        """Event of all atoms whose label satisfies ``predicate``."""
        return Event(frozenset(l for l in self._labels if predicate(l)), name)

    def prob(self, e: Event) -> Number:
        self.check(e)
        w, idx = self._weights, self._index
        if self._exact:
            return sum((w[idx[l]] for l in e.labels), Fraction(0))
        return math.fsum(w[idx[l]] for l in e.labels)  # order-free, hence reproducible

    # -- serialization ----------------------------------------------------
    def to_json_obj(self) -> dict:
        atoms = []
        for label, w in self:
            atoms.append({"label": label, "weight": _weight_to_json(w)})
        return {"atoms": atoms}

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "ProbabilitySpace":
        return cls((a["label"], a["weight"]) for a in obj["atoms"])

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, text: str) -> "ProbabilitySpace":
        return cls.from_json_obj(json.loads(text))


def _weight_to_json(w: Number):
    if isinstance(w, Fraction):
        return str(w) if w.denominator != 1 else int(w)
    return float(w)


def event_to_json(e: Event) -> list:
    return sorted(e.labels, key=str)


def event_from_json(space: ProbabilitySpace, labels: Sequence) -> Event:
    return space.event(labels)


# ---------------------------------------------------------------------------
# check reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Witness:
    events: tuple[str, ...]
    lhs: float
    rhs: float
    residual: float
    note: str = ""

    def to_json_obj(self) -> dict:
        out = {"events": list(self.events), "lhs": self.lhs, "rhs": self.rhs, "residual": self.residual}
        if self.note:
            out["note"] = self.note
        return out


@dataclass(frozen=True)
class CheckReport:
    """Uniform verdict record.  ``holds`` iff ``max_residual <= tolerance``."""

    condition: str
    holds: bool
    max_residual: float
    tolerance: float
    witnesses: tuple[Witness, ...] = ()
    skipped: tuple[str, ...] = ()
    flags: tuple[str, ...] = ()
    details: dict = field(default_factory=dict, compare=False)

    def __bool__(self) -> bool:
        return self.holds

    def to_json_obj(self) -> dict:
        out = {
            "condition": self.condition,
            "holds": self.holds,
            "max_residual": self.max_residual,
            "tolerance": self.tolerance,
            "witnesses": [w.to_json_obj() for w in self.witnesses],
        }
        if self.skipped:
            out["skipped"] = list(self.skipped)
        if self.flags:
            out["flags"] = list(self.flags)
        if self.details:
            out["details"] = _jsonable(self.details)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, CheckReport):
        return obj.to_json_obj()
    if hasattr(obj, "item"):  # numpy scalars
        return obj.item()
    return obj


@dataclass
class _Item:
    events: tuple[str, ...]
    lhs: Number
    rhs: Number
    residual: Number
    ok: bool
    note: str = ""


def equality_item(events, lhs, rhs, tol, note="") -> _Item:
    r = abs(lhs - rhs)
    return _Item(tuple(events), lhs, rhs, r, r <= tol, note)


def strict_item(events, greater, smaller, tol, note="") -> _Item:
    """Item asserting ``greater > smaller + tol``.

    A failed strict inequality contributes a residual strictly above ``tol`` so
    that the ``holds <=> max_residual <= tol`` invariant survives.
    """
    gap = greater - smaller
    if gap > tol:
        return _Item(tuple(events), greater, smaller, 0.0, True, note)
    r = max(math.nextafter(float(tol), math.inf), float(tol) + float(-gap))
    return _Item(tuple(events), greater, smaller, r, False, note)


def build_report(
    condition: str,
    items: Sequence[_Item],
    tol: float,
    *,
    skipped: Sequence[str] = (),
    flags: Sequence[str] = (),
    details: dict | None = None,
    max_witnesses: int = 20,
) -> CheckReport:
    holds = all(it.ok for it in items)
    max_r = max((float(it.residual) for it in items), default=0.0)
    if not holds and max_r <= tol:
        # exact verdict failed although the float residual rounded below tol
        max_r = math.nextafter(float(tol), math.inf)
    failing = [it for it in items if not it.ok]
    if failing:
        chosen = sorted(failing, key=lambda it: -float(it.residual))[:max_witnesses]
    elif items:
        chosen = [max(items, key=lambda it: float(it.residual))]
    else:
        chosen = []
    witnesses = tuple(
        Witness(it.events, float(it.lhs), float(it.rhs), float(it.residual), it.note) for it in chosen
    )
    return CheckReport(
        condition=condition,
        holds=holds,
        max_residual=max_r,
        tolerance=float(tol),
        witnesses=witnesses,
        skipped=tuple(skipped),
        flags=tuple(flags),
        details=dict(details or {}),
    )


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def prob(space: ProbabilitySpace, e: Event) -> Number:
    return space.prob(e)


def cond_prob(space: ProbabilitySpace, a: Event, b: Event) -> Number:
    pb = space.prob(b)
    if pb == 0:
        raise NullConditioningError(f"cannot condition on {b.describe()}: probability zero")
    return space.prob(a & b) / pb


def correlation(space: ProbabilitySpace, e: Event, f: Event) -> Number:
    return space.prob(e & f) - space.prob(e) * space.prob(f)


def screen_item(space, c, e, f, tol, label):
    lhs = cond_prob(space, e & f, c)
    rhs = cond_prob(space, e, c) * cond_prob(space, f, c)
    return equality_item((label, e.describe(), f.describe()), lhs, rhs, tol, note="P(EF|C) vs P(E|C)P(F|C)")


def screens_off(space: ProbabilitySpace, c: Event, e: Event, f: Event, tol: float = DEFAULT_TOL) -> CheckReport:
    """Does conditioning on ``c`` remove the correlation between ``e`` and ``f``?"""
    for ev in (c, e, f):
        space.check(ev)
    item = screen_item(space, c, e, f, tol, c.describe())
    return build_report("screens_off", [item], tol)


def reichenbach_check(
    space: ProbabilitySpace,
    c: Event,
    e: Event,
    f: Event,
    tol: float = DEFAULT_TOL,
    *,
    signed: bool = False,
) -> CheckReport:
    """Reichenbach's four conditions for ``c`` as common cause of ``e`` and ``f``.

    ``c`` and its complement must both screen off, and ``c`` must raise the
    probability of both effects.  With ``signed=True`` the requirement on ``f``
    follows the sign of the correlation (raised if positive, lowered if
    negative), so anticorrelated pairs can have a cause too.
    """
    for ev in (c, e, f):
        space.check(ev)
    pc = space.prob(c)
    if pc == 0 or pc == 1:
        raise NullConditioningError("Reichenbach check needs 0 < P(C) < 1")
    nc = space.complement(c)
    items = [
        screen_item(space, c, e, f, tol, "C"),
        screen_item(space, nc, e, f, tol, "~C"),
    ]
    pe, pf = space.prob(e), space.prob(f)
    pec, pfc = cond_prob(space, e, c), cond_prob(space, f, c)
    items.append(strict_item(("C", e.describe()), pec, pe, tol, note="P(E|C) > P(E)"))
    corr = correlation(space, e, f)
    if signed and corr < 0:
        items.append(strict_item(("C", f.describe()), pf, pfc, tol, note="P(F|C) < P(F)"))
    else:
        items.append(strict_item(("C", f.describe()), pfc, pf, tol, note="P(F|C) > P(F)"))
    details = {
        "sub_residuals": {
            "screen_C": float(items[0].residual),
            "screen_not_C": float(items[1].residual),
            "raise_E": float(items[2].residual),
            "raise_F": float(items[3].residual),
        },
        "correlation": float(corr),
    }
    return build_report("reichenbach", items, tol, details=details, max_witnesses=4)


def partition_screening_items(space, part, e, f, tol, tag=""):
    """Per-cell screening items; null cells are returned separately."""
    items, skipped = [], []
    for cell in part:
        name = f"{tag}{cell.describe()}"
        if space.prob(cell) == 0:
            log.debug("skipping null cell %s", name)
            skipped.append(name)
            continue
        items.append(screen_item(space, cell, e, f, tol, name))
    return items, skipped


def partition_screens_off(
    space: ProbabilitySpace,
    part: Partition,
    e: Event,
    f: Event,
    tol: float = DEFAULT_TOL,
) -> CheckReport:
    part.validate(space)
    space.check(e)
    space.check(f)
    items, skipped = partition_screening_items(space, part, e, f, tol)
    return build_report("partition_screens_off", items, tol, skipped=skipped)


def conditionalize(space: ProbabilitySpace, h: Event) -> ProbabilitySpace:
    """Restrict to ``h`` and renormalize."""
    ph = space.prob(h)
    if ph == 0:
        raise NullConditioningError(f"cannot conditionalize on null event {h.describe()}")
    return ProbabilitySpace((l, w / ph) for l, w in space if l in h.labels)
