"""Stochastic Einstein locality on a 1+1 integer lattice.

Points are ``(t, x)`` pairs with ``0 <= t < T`` and ``0 <= x < X``; light moves
one column per tick.  A hypersurface is a height function ``h(x)`` in
``[-1, T-1]`` with slope at most one; its past is ``{(t, x): t <= h(x)}``.
Pasts are inclusive, so every region lies inside its own causal past.

A :class:`WorldEnsemble` is an explicit list of binary field configurations
with an initial measure.  Every probability ``pr_t`` is that measure
conditioned on a world's history in the past of ``t``; all checks are exact
enumerations over history classes.

Rational ensembles are stored as integer masses over a common denominator
(at most ``2**26``) so that the cross-multiplied screening identities are
evaluated without rounding in float64.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import (
    InvalidEventError,
    InvalidGeometryError,
    InvalidPartitionError,
    InvalidSpaceError,
    NullConditioningError,
)
from .prob_core import DEFAULT_TOL, CheckReport, ProbabilitySpace, Witness

Point = tuple[int, int]

#: largest common denominator kept in exact mode (products stay below 2**52)
EXACT_DENOMINATOR_LIMIT = 2**26
MAX_WITNESSES = 20


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeSpacetime:
    time_extent: int
    space_extent: int

    def __post_init__(self):
        if self.time_extent < 1 or self.space_extent < 1:
            raise InvalidGeometryError("lattice extents must be at least 1")

    @property
    def T(self) -> int:
        return self.time_extent

    @property
    def X(self) -> int:
        return self.space_extent

    @property
    def n_points(self) -> int:
        return self.time_extent * self.space_extent

    def contains(self, p: Point) -> bool:
        t, x = p
        return 0 <= t < self.T and 0 <= x < self.X

    def index(self, p: Point) -> int:
        return p[0] * self.X + p[1]

    def all_points(self) -> list[Point]:
        return [(t, x) for t in range(self.T) for x in range(self.X)]

    @staticmethod
    def precedes(q: Point, p: Point) -> bool:
        """``q`` is in the inclusive causal past of ``p``."""
        dt = p[0] - q[0]
        return dt >= 0 and abs(p[1] - q[1]) <= dt

    def region(self, points: Iterable[Point]) -> "Region":
        r = Region(frozenset((int(t), int(x)) for t, x in points))
        self.check_region(r)
        return r

    def check_region(self, r: "Region") -> "Region":
        for p in r.points:
            if not self.contains(p):
                raise InvalidGeometryError(f"point {p} lies outside the {self.T}x{self.X} lattice")
        return r

    def to_json_obj(self) -> dict:
        return {"T": self.T, "X": self.X}


@dataclass(frozen=True)
class Region:
    points: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "points", frozenset(self.points))

    def __iter__(self):
        return iter(self.sorted())

    def __len__(self) -> int:
        return len(self.points)

    def __contains__(self, p) -> bool:
        return p in self.points

    def __or__(self, other: "Region") -> "Region":
        return Region(self.points | other.points)

    def __and__(self, other: "Region") -> "Region":
        return Region(self.points & other.points)

    def __sub__(self, other: "Region") -> "Region":
        return Region(self.points - other.points)

    def sorted(self) -> tuple[Point, ...]:
        return tuple(sorted(self.points))

    def is_empty(self) -> bool:
        return not self.points

    def to_json_obj(self) -> list:
        return [list(p) for p in self.sorted()]


def _cone_heights(width: int, points: Iterable[Point]) -> np.ndarray:
    """Per column, the top of the union of past cones (``-1`` where empty)."""
    h = np.full(width, -1, dtype=np.int64)
    xs = np.arange(width)
    for t, x in points:
        np.maximum(h, t - np.abs(xs - x), out=h)
    return np.maximum(h, -1)


def _past_set(lattice: LatticeSpacetime, heights) -> Region:
    return Region(frozenset((t, x) for x in range(lattice.X) for t in range(0, int(heights[x]) + 1)))


def causal_past(lattice: LatticeSpacetime, r: Region) -> Region:
    lattice.check_region(r)
    return _past_set(lattice, _cone_heights(lattice.X, r.points))


def _future_set(lattice: LatticeSpacetime, heights) -> Region:
    return Region(frozenset((t, x) for x in range(lattice.X) for t in range(int(heights[x]) + 1, lattice.T)))


def causal_future(lattice: LatticeSpacetime, r: Region) -> Region:
    lattice.check_region(r)
    return Region(frozenset(p for p in lattice.all_points() if any(LatticeSpacetime.precedes(q, p) for q in r.points)))


def spacelike(lattice: LatticeSpacetime, a: Region, b: Region) -> bool:
    """No point of either region lies in the causal past of the other."""
    return not (b.points & causal_past(lattice, a).points) and not (a.points & causal_past(lattice, b).points)


@dataclass(frozen=True)
class Hypersurface:
    heights: tuple[int, ...]

    def __post_init__(self):
        hs = tuple(int(v) for v in self.heights)
        object.__setattr__(self, "heights", hs)
        if not hs:
            raise InvalidGeometryError("a hypersurface needs at least one column")
        for a, b in zip(hs, hs[1:]):
            if abs(a - b) > 1:
                raise InvalidGeometryError(f"hypersurface is not achronal: heights {hs}")
        if min(hs) < -1:
            raise InvalidGeometryError("heights below -1 are not allowed")

    def __len__(self) -> int:
        return len(self.heights)

    def __getitem__(self, x: int) -> int:
        return self.heights[x]

    def validate(self, lattice: LatticeSpacetime) -> "Hypersurface":
        if len(self.heights) != lattice.X:
            raise InvalidGeometryError(f"hypersurface has {len(self.heights)} columns, lattice has {lattice.X}")
        if max(self.heights) > lattice.T - 1:
            raise InvalidGeometryError("hypersurface rises above the lattice")
        return self

    def past(self, lattice: LatticeSpacetime) -> Region:
        return _past_set(lattice, self.validate(lattice).heights)

    def future(self, lattice: LatticeSpacetime) -> Region:
        return _future_set(lattice, self.validate(lattice).heights)

    def is_future(self, r: Region) -> bool:
        return all(t > self.heights[x] for t, x in r.points)

    def is_past(self, r: Region) -> bool:
        return all(t <= self.heights[x] for t, x in r.points)

    @classmethod
    def flat(cls, lattice: LatticeSpacetime, t: int) -> "Hypersurface":
        return cls((t,) * lattice.X)

    @classmethod
    def top_of(cls, lattice: LatticeSpacetime, r: Region) -> "Hypersurface":
        """Upper boundary of the causal past of ``r``."""
        return cls(tuple(_cone_heights(lattice.X, r.points)))

    @classmethod
    def enumerate_all(cls, lattice: LatticeSpacetime) -> list["Hypersurface"]:
        out: list[tuple[int, ...]] = [(h,) for h in range(-1, lattice.T)]
        for _ in range(lattice.X - 1):
            nxt = []
            for hs in out:
                for d in (-1, 0, 1):
                    v = hs[-1] + d
                    if -1 <= v <= lattice.T - 1:
                        nxt.append(hs + (v,))
            out = nxt
        return [cls(hs) for hs in out]

    def to_json_obj(self) -> list:
        return list(self.heights)


def divides(h: Hypersurface, e_region: Region) -> bool:
    """``h`` lies below the event and cuts its past cone into a nonempty base and summit."""
    if e_region.is_empty() or not h.is_future(e_region):
        return False
    if any(not 0 <= x < len(h) for _, x in e_region.points):
        return False
    cone = _cone_heights(len(h), e_region.points)
    return bool(np.any(np.minimum(cone, np.asarray(h.heights)) >= 0))


def table_mountain(lattice: LatticeSpacetime, e_region: Region, h: Hypersurface) -> Region:
    """Intersection of the past of ``h`` with the causal past of the event."""
    return h.past(lattice) & causal_past(lattice, e_region)


def table_mountain_surface(lattice: LatticeSpacetime, e_region: Region, h: Hypersurface) -> Hypersurface:
    """Upper boundary of the table-mountain region, itself a hypersurface."""
    h.validate(lattice)
    cone = _cone_heights(lattice.X, e_region.points)
    return Hypersurface(tuple(np.maximum(np.minimum(cone, np.asarray(h.heights)), -1)))


def _seld1_geometry(lattice, e_region, f_region, h) -> None:
    h.validate(lattice)
    lattice.check_region(e_region)
    lattice.check_region(f_region)
    if e_region.is_empty() or f_region.is_empty():
        raise InvalidGeometryError("events need nonempty regions")
    if not h.is_future(e_region):
        raise InvalidGeometryError("E is not future to the hypersurface")
    if not h.is_future(f_region):
        raise InvalidGeometryError("F is not future to the hypersurface")
    if not spacelike(lattice, e_region, f_region):
        raise InvalidGeometryError("F is not spacelike to E")
    overlap = causal_past(lattice, e_region) & causal_past(lattice, f_region) & h.future(lattice)
    if not overlap.is_empty():
        raise InvalidGeometryError(
            f"past cones of E and F overlap above the hypersurface at {overlap.sorted()[:4]}"
        )


def _seld2_geometry(lattice, e_region, f_region, h) -> None:
    h.validate(lattice)
    lattice.check_region(e_region)
    if e_region.is_empty():
        raise InvalidGeometryError("E needs a nonempty region")
    if not h.is_future(e_region):
        raise InvalidGeometryError("E is not future to the hypersurface")
    if f_region is not None:
        lattice.check_region(f_region)
        if not h.is_past(f_region):
            raise InvalidGeometryError("F is not inside the past of the hypersurface")
        if f_region.points & causal_past(lattice, e_region).points:
            raise InvalidGeometryError("F meets the causal past of E")


def concordance_surface(
    lattice: LatticeSpacetime, e_region: Region, f_region: Region, h: Hypersurface
) -> Hypersurface:
    """Raise ``h`` over the cone of ``F`` so that ``F`` falls in its past.

    The result coincides with ``h`` throughout the causal past of ``E``.
    """
    h.validate(lattice)
    if not h.is_future(e_region):
        raise InvalidGeometryError("E is not future to the hypersurface")
    if not spacelike(lattice, e_region, f_region):
        raise InvalidGeometryError("F is not spacelike to E")
    overlap = causal_past(lattice, e_region) & causal_past(lattice, f_region) & h.future(lattice)
    if not overlap.is_empty():
        raise InvalidGeometryError("past cones of E and F overlap above the hypersurface")
    cone_f = _cone_heights(lattice.X, f_region.points)
    return Hypersurface(tuple(np.maximum(np.asarray(h.heights), cone_f)))


# ---------------------------------------------------------------------------
# events and histories
# ---------------------------------------------------------------------------


MAX_EVENT_POINTS = 20


@dataclass(frozen=True)
class LocalEvent:
    """Event intrinsic to a region: a set of accepted field patterns on it.

    Pattern codes use bit ``i`` for the value at the ``i``-th point in sorted
    order, so the event cannot depend on anything outside its region.
    """

    points: tuple[Point, ...]
    accepted: frozenset
    name: str | None = field(default=None, compare=False)

    def __post_init__(self):
        pts = tuple(sorted((int(t), int(x)) for t, x in self.points))
        if len(set(pts)) != len(pts):
            raise InvalidEventError("repeated points in event region")
        if len(pts) > MAX_EVENT_POINTS:
            raise InvalidEventError(f"events are limited to {MAX_EVENT_POINTS} points")
        object.__setattr__(self, "points", pts)
        acc = frozenset(int(c) for c in self.accepted)
        if any(c < 0 or c >= (1 << len(pts)) for c in acc):
            raise InvalidEventError("pattern code out of range for region")
        object.__setattr__(self, "accepted", acc)

    @property
    def region(self) -> Region:
        return Region(frozenset(self.points))

    @classmethod
    def point_is(cls, p: Point, value: int = 1, name: str | None = None) -> "LocalEvent":
        return cls((p,), frozenset([1 if value else 0]), name or f"{p}={int(bool(value))}")

    @classmethod
    def from_patterns(cls, points: Sequence[Point], patterns: Iterable[Sequence[int]], name=None) -> "LocalEvent":
        """``patterns`` give values in the order of ``points`` as passed."""
        pts = [tuple(p) for p in points]
        order = sorted(range(len(pts)), key=lambda i: pts[i])
        codes = set()
        for pat in patterns:
            if len(pat) != len(pts):
                raise InvalidEventError("pattern length differs from region size")
            codes.add(sum((1 << k) for k, i in enumerate(order) if pat[i]))
        return cls(tuple(pts), frozenset(codes), name)

    @classmethod
    def from_predicate(cls, points: Sequence[Point], predicate: Callable[[Mapping], bool], name=None) -> "LocalEvent":
        """Enumerate every field pattern on ``points`` and keep those ``predicate`` accepts."""
        pts = tuple(sorted(tuple(p) for p in points))
        codes = set()
        for code in range(1 << len(pts)):
            values = {p: (code >> i) & 1 for i, p in enumerate(pts)}
            if predicate(values):
                codes.add(code)
        return cls(pts, frozenset(codes), name)

    def holds_on(self, values: Mapping) -> bool:
        code = sum((1 << i) for i, p in enumerate(self.points) if values[p])
        return code in self.accepted

    def __and__(self, other: "LocalEvent") -> "LocalEvent":
        pts = sorted(set(self.points) | set(other.points))
        return LocalEvent.from_predicate(pts, lambda v: self.holds_on(v) and other.holds_on(v))

    def __or__(self, other: "LocalEvent") -> "LocalEvent":
        pts = sorted(set(self.points) | set(other.points))
        return LocalEvent.from_predicate(pts, lambda v: self.holds_on(v) or other.holds_on(v))

    def __invert__(self) -> "LocalEvent":
        full = frozenset(range(1 << len(self.points)))
        return LocalEvent(self.points, full - self.accepted, f"~{self.name}" if self.name else None)

    def mask(self, lattice: LatticeSpacetime, worlds: np.ndarray) -> np.ndarray:
        for p in self.points:
            if not lattice.contains(p):
                raise InvalidGeometryError(f"event point {p} outside lattice")
        if not self.points:
            return np.full(worlds.shape[0], 0 in self.accepted)
        cols = np.array([lattice.index(p) for p in self.points], dtype=np.int64)
        codes = _kernels.pack_keys(worlds, cols)[:, 0].astype(np.int64)
        return np.isin(codes, np.fromiter(self.accepted, dtype=np.int64, count=len(self.accepted)))

    def describe(self) -> str:
        return self.name or f"event@{list(self.points)}"

    def to_json_obj(self) -> dict:
        return {"points": [list(p) for p in self.points], "accepted": sorted(self.accepted), "name": self.name}

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "LocalEvent":
        return cls(tuple(tuple(p) for p in obj["points"]), frozenset(obj["accepted"]), obj.get("name"))


@dataclass(frozen=True)
class History:
    region: Region
    values: tuple[int, ...]  # in sorted point order

    def __post_init__(self):
        if len(self.values) != len(self.region):
            raise InvalidEventError("history needs one value per region point")

    def as_event(self) -> LocalEvent:
        code = sum((1 << i) for i, v in enumerate(self.values) if v)
        return LocalEvent(self.region.sorted(), frozenset([code]), "history")


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


class WorldEnsemble:
    """Finite set of lattice worlds with an initial measure.

    ``worlds`` is a ``(W, T*X)`` uint8 array in row-major order (index
    ``t*X + x``).  Duplicated worlds are merged by adding their weights.
    """

    def __init__(self, lattice: LatticeSpacetime, worlds, weights: Sequence):
        arr = np.asarray(worlds, dtype=np.uint8)
        if arr.ndim == 3:
            arr = arr.reshape(arr.shape[0], -1)
        if arr.ndim != 2 or arr.shape[1] != lattice.n_points:
            raise InvalidSpaceError(f"worlds must have shape (W, {lattice.n_points})")
        if arr.shape[0] == 0:
            raise InvalidSpaceError("an ensemble needs at least one world")
        if len(weights) != arr.shape[0]:
            raise InvalidSpaceError("one weight per world is required")
        if np.any(arr > 1):
            raise InvalidSpaceError("fields are binary")
        raw = list(weights)
        exact = all(isinstance(w, (int, Fraction, str)) and not isinstance(w, bool) for w in raw)
        if exact:
            fr = [Fraction(w) for w in raw]
            denom = 1
            for w in fr:
                denom = denom * w.denominator // math.gcd(denom, w.denominator)
            if denom > EXACT_DENOMINATOR_LIMIT:
                exact = False
            else:
                masses = [int(w * denom) for w in fr]
                if any(m < 0 for m in masses):
                    raise InvalidSpaceError("weights must be non-negative")
                if sum(masses) != denom:
                    raise InvalidSpaceError(f"weights sum to {Fraction(sum(masses), denom)}, not 1")
                mass = np.array(masses, dtype=np.float64)
                total = float(denom)
        if not exact:
            mass = np.array([float(Fraction(w)) if isinstance(w, str) else float(w) for w in raw], dtype=np.float64)
            if np.any(mass < 0):
                raise InvalidSpaceError("weights must be non-negative")
            if abs(mass.sum() - 1.0) > 1e-12:
                raise InvalidSpaceError(f"weights sum to {mass.sum()!r}, not 1")
            total = 1.0
        self._init(lattice, arr, mass, total, exact)

    @classmethod
    def from_masses(cls, lattice: LatticeSpacetime, worlds, masses, total: int) -> "WorldEnsemble":
        """Exact ensemble from integer masses over the common denominator ``total``."""
        arr = np.asarray(worlds, dtype=np.uint8).reshape(len(masses), -1)
        m = np.asarray(masses, dtype=np.int64)
        if total > EXACT_DENOMINATOR_LIMIT:
            return cls(lattice, arr, list(m.astype(np.float64) / float(total)))
        if int(m.sum()) != int(total) or np.any(m < 0):
            raise InvalidSpaceError("masses must be non-negative and sum to the total")
        obj = cls.__new__(cls)
        obj._init(lattice, arr, m.astype(np.float64), float(total), True)
        return obj

    def _init(self, lattice, arr, mass, total, exact):
        keys = _kernels.pack_keys(arr, np.arange(arr.shape[1]))
        ids, n = _kernels.group_ids(keys)
        if n < arr.shape[0]:
            first = np.full(n, -1, dtype=np.int64)
            for i in range(arr.shape[0] - 1, -1, -1):
                first[ids[i]] = i
            mass = _kernels.group_sums(ids, mass, n)
            arr = arr[first]
        self.lattice = lattice
        self.worlds = np.ascontiguousarray(arr)
        self.mass = np.ascontiguousarray(mass, dtype=np.float64)
        self.total = float(total)
        self.exact = bool(exact)
        self._class_cache: dict = {}

    # -- accessors --------------------------------------------------------
    @property
    def n_worlds(self) -> int:
        return self.worlds.shape[0]

    def __len__(self) -> int:
        return self.n_worlds

    def __repr__(self) -> str:
        kind = "exact" if self.exact else "float"
        return f"WorldEnsemble({self.lattice.T}x{self.lattice.X}, {self.n_worlds} worlds, {kind})"

    def weight(self, w: int):
        if self.exact:
            return Fraction(int(self.mass[w]), int(self.total))
        return float(self.mass[w])

    @property
    def weights(self) -> list:
        return [self.weight(i) for i in range(self.n_worlds)]

    def world(self, w: int) -> np.ndarray:
        return self.worlds[w].reshape(self.lattice.T, self.lattice.X)

    def value(self, w: int, p: Point) -> int:
        return int(self.worlds[w, self.lattice.index(p)])

    def classes(self, region: Region) -> tuple[np.ndarray, int]:
        """History class index of every world on ``region``."""
        key = region.points
        hit = self._class_cache.get(key)
        if hit is None:
            self.lattice.check_region(region)
            cols = np.array([self.lattice.index(p) for p in region.sorted()], dtype=np.int64)
            if len(cols) == 0:
                hit = (np.zeros(self.n_worlds, dtype=np.int64), 1)
            else:
                hit = _kernels.group_ids(_kernels.pack_keys(self.worlds, cols))
            self._class_cache[key] = hit
        return hit

    def mask(self, e: LocalEvent) -> np.ndarray:
        return e.mask(self.lattice, self.worlds)

    def _to_number(self, m: float):
        return Fraction(int(round(m)), int(self.total)) if self.exact else float(m)

    def prob(self, e: LocalEvent):
        return self._to_number(self.mass[self.mask(e)].sum())

    def history_of(self, w: int, region: Region) -> History:
        return History(region, tuple(self.value(w, p) for p in region.sorted()))

    def to_probability_space(self) -> ProbabilitySpace:
        return ProbabilitySpace((f"w{i}", self.weight(i)) for i in range(self.n_worlds))

    # -- serialization ----------------------------------------------------
    def to_json_obj(self) -> dict:
        worlds = [{"bits": base64.b64encode(np.packbits(row).tobytes()).decode("ascii")} for row in self.worlds]
        weights = []
        for i in range(self.n_worlds):
            w = self.weight(i)
            weights.append(str(w) if isinstance(w, Fraction) else w)
        return {"lattice": self.lattice.to_json_obj(), "worlds": worlds, "weights": weights}

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "WorldEnsemble":
        lat = LatticeSpacetime(int(obj["lattice"]["T"]), int(obj["lattice"]["X"]))
        rows = []
        for w in obj["worlds"]:
            raw = np.frombuffer(base64.b64decode(w["bits"]), dtype=np.uint8)
            rows.append(np.unpackbits(raw)[: lat.n_points])
        return cls(lat, np.array(rows, dtype=np.uint8), obj["weights"])

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json(cls, text: str) -> "WorldEnsemble":
        return cls.from_json_obj(json.loads(text))


# ---------------------------------------------------------------------------
# conditional probabilities
# ---------------------------------------------------------------------------


def _class_mask(ens: WorldEnsemble, region: Region, w: int) -> np.ndarray:
    ids, _ = ens.classes(region)
    return ids == ids[w]


def pr_history(ens: WorldEnsemble, hist: History, e: LocalEvent):
    """Initial measure conditioned on ``hist``, evaluated on ``e``."""
    match = ens.mask(hist.as_event())
    s = ens.mass[match].sum()
    if s == 0:
        raise NullConditioningError("history has zero measure")
    se = ens.mass[match & ens.mask(e)].sum()
    if ens.exact:
        return Fraction(int(round(se)), int(round(s)))
    return float(se / s)


def pr_tw(ens: WorldEnsemble, h: Hypersurface, w: int, e: LocalEvent):
    """``pr_t`` in world ``w``: condition on ``w``'s history throughout the past of ``h``."""
    past = h.past(ens.lattice)
    return pr_history(ens, ens.history_of(w, past), e)


# ---------------------------------------------------------------------------
# report helpers
# ---------------------------------------------------------------------------


def _array_report(
    condition: str,
    num: np.ndarray,
    den: np.ndarray,
    lhs: np.ndarray,
    rhs: np.ndarray,
    labels,
    tol: float,
    *,
    flags=(),
    skipped=(),
    details=None,
    ok: np.ndarray | None = None,
) -> CheckReport:
    """Verdict from cross-multiplied residuals ``num/den`` (``den > 0``)."""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    if num.size == 0:
        return CheckReport(condition, True, 0.0, float(tol), (), tuple(skipped), tuple(flags), dict(details or {}))
    res = num / den
    if ok is None:
        ok = num <= tol * den
    holds = bool(np.all(ok))
    max_r = float(res.max())
    if not holds and max_r <= tol:
        max_r = math.nextafter(float(tol), math.inf)
    if holds:
        order = [int(np.argmax(res))]
    else:
        bad = np.flatnonzero(~ok)
        order = bad[np.argsort(-res[bad], kind="stable")][:MAX_WITNESSES].tolist()
    lab = labels if callable(labels) else labels.__getitem__
    wit = tuple(Witness((lab(i),), float(lhs[i]), float(rhs[i]), float(res[i])) for i in order)
    return CheckReport(condition, holds, max_r, float(tol), wit, tuple(skipped), tuple(flags), dict(details or {}))


def _screening(ens: WorldEnsemble, ids: np.ndarray, n: int, me: np.ndarray, mf: np.ndarray):
    """Per-class sums and cross-multiplied screening residuals."""
    gs = _kernels.group_sums
    s = gs(ids, ens.mass, n)
    se = gs(ids, ens.mass * me, n)
    sf = gs(ids, ens.mass * mf, n)
    sef = gs(ids, ens.mass * (me & mf), n)
    pos = s > 0
    s, se, sf, sef = s[pos], se[pos], sf[pos], sef[pos]
    num = np.abs(sef * s - se * sf)
    den = s * s
    return np.flatnonzero(pos), num, den, sef / s, se * sf / den


def _labeller(ids: np.ndarray, n: int, kind: str, classes=None) -> Callable[[int], str]:
    """Lazy witness labels naming a representative world of each class."""
    rep = np.full(n, -1, dtype=np.int64)
    rep[ids[::-1]] = np.arange(len(ids) - 1, -1, -1)
    classes = np.arange(n) if classes is None else np.asarray(classes)
    return lambda i: f"{kind}-class of world {int(rep[classes[i]])}"


# ---------------------------------------------------------------------------
# checkers
# ---------------------------------------------------------------------------


def check_SELS(ens: WorldEnsemble, e: LocalEvent, h: Hypersurface, tol: float = DEFAULT_TOL) -> CheckReport:
    """Worlds agreeing on the table mountain give ``e`` the same ``pr_t``."""
    lat = ens.lattice
    h.validate(lat)
    if not divides(h, e.region):
        raise InvalidGeometryError("hypersurface does not divide the causal past of E")
    past = h.past(lat)
    tm = past & causal_past(lat, e.region)
    pid, np_ = ens.classes(past)
    tid, _ = ens.classes(tm)
    me = ens.mask(e)
    s = _kernels.group_sums(pid, ens.mass, np_)
    se = _kernels.group_sums(pid, ens.mass * me, np_)
    tm_of = np.zeros(np_, dtype=np.int64)
    tm_of[pid] = tid
    pos = np.flatnonzero(s > 0)
    ratio = se[pos] / s[pos]
    order = np.lexsort((ratio, tm_of[pos]))
    groups = tm_of[pos][order]
    starts = np.flatnonzero(np.r_[True, groups[1:] != groups[:-1]])
    ends = np.r_[starts[1:], len(order)] - 1
    lo, hi = pos[order[starts]], pos[order[ends]]
    num = np.abs(se[hi] * s[lo] - se[lo] * s[hi])
    den = s[hi] * s[lo]
    labels = _labeller(tid, int(tid.max()) + 1, "table-mountain", tm_of[lo])
    return _array_report(
        "SELS", num, den, se[hi] / s[hi], se[lo] / s[lo], labels, tol,
        details={"table_mountain_classes": len(starts), "past_classes": len(pos)},
    )


def check_SELD1(
    ens: WorldEnsemble, e: LocalEvent, f: LocalEvent, h: Hypersurface, tol: float = DEFAULT_TOL
) -> CheckReport:
    """``pr_t`` factorizes on spacelike ``e``, ``f`` in every world."""
    lat = ens.lattice
    _seld1_geometry(lat, e.region, f.region, h)
    flags = () if divides(h, e.region) else ("degenerate-geometry",)
    pid, n = ens.classes(h.past(lat))
    cls, num, den, lhs, rhs = _screening(ens, pid, n, ens.mask(e), ens.mask(f))
    labels = _labeller(pid, n, "past", cls)
    return _array_report("SELD1", num, den, lhs, rhs, labels, tol, flags=flags)


def check_SELD2(
    ens: WorldEnsemble, e: LocalEvent, f: LocalEvent | None, h: Hypersurface, tol: float = DEFAULT_TOL
) -> CheckReport:
    """Table-mountain histories screen ``e`` off from ``f``.

    With ``f=None`` the check runs against the whole history of the region
    between the table mountain and ``h`` (equivalent to every such ``f``).
    """
    lat = ens.lattice
    _seld2_geometry(lat, e.region, None if f is None else f.region, h)
    past = h.past(lat)
    tm = past & causal_past(lat, e.region)
    flags = ("degenerate-geometry",) if tm.is_empty() else ()
    tid, nt = ens.classes(tm)
    me = ens.mask(e)
    if f is not None:
        cls, num, den, lhs, rhs = _screening(ens, tid, nt, me, ens.mask(f))
        labels = _labeller(tid, nt, "table-mountain", cls)
        return _array_report("SELD2", num, den, lhs, rhs, labels, tol, flags=flags)
    pid, np_ = ens.classes(past)
    gs = _kernels.group_sums
    s_t = gs(tid, ens.mass, nt)
    se_t = gs(tid, ens.mass * me, nt)
    s_p = gs(pid, ens.mass, np_)
    se_p = gs(pid, ens.mass * me, np_)
    tm_of = np.zeros(np_, dtype=np.int64)
    tm_of[pid] = tid
    pos = np.flatnonzero(s_p > 0)
    t = tm_of[pos]
    num = np.abs(se_p[pos] * s_t[t] - se_t[t] * s_p[pos])
    den = s_t[t] * s_t[t]
    labels = _labeller(pid, np_, "past", pos)
    return _array_report(
        "SELD2_all", num, den, se_p[pos] / s_t[t], se_t[t] * s_p[pos] / den, labels, tol, flags=flags
    )


def check_ratio_assumption(
    ens: WorldEnsemble, e: LocalEvent, f: LocalEvent, h: Hypersurface, tol: float = DEFAULT_TOL
) -> CheckReport:
    """Per world: ``pr_t(EF)/pr_HE(EF) == pr_HF(F)/pr_HE(F)``.

    ``HE`` and ``HF`` are the world's histories on the parts of the past of
    ``h`` inside the causal pasts of ``e`` and ``f``.
    """
    lat = ens.lattice
    _seld1_geometry(lat, e.region, f.region, h)
    past = h.past(lat)
    he = past & causal_past(lat, e.region)
    hf = past & causal_past(lat, f.region)
    me, mf = ens.mask(e), ens.mask(f)
    mef = me & mf
    gs = _kernels.group_sums
    pid, np_ = ens.classes(past)
    eid, ne = ens.classes(he)
    fid, nf = ens.classes(hf)
    s_p, sef_p = gs(pid, ens.mass, np_), gs(pid, ens.mass * mef, np_)
    s_e, sef_e, sf_e = gs(eid, ens.mass, ne), gs(eid, ens.mass * mef, ne), gs(eid, ens.mass * mf, ne)
    s_f, sf_f = gs(fid, ens.mass, nf), gs(fid, ens.mass * mf, nf)
    e_of = np.zeros(np_, dtype=np.int64)
    f_of = np.zeros(np_, dtype=np.int64)
    e_of[pid] = eid
    f_of[pid] = fid
    num_l, den_l, lhs_l, rhs_l, labels, skipped, oks = [], [], [], [], [], [], []
    conv = (lambda v: int(round(v))) if ens.exact else float
    name = _labeller(pid, np_, "past")
    for c in np.flatnonzero(s_p > 0):
        a, b = e_of[c], f_of[c]
        label = name(int(c))
        if sef_e[a] == 0 or sf_e[a] == 0:
            skipped.append(label)
            continue
        lhs = Fraction(conv(sef_p[c]) * conv(s_e[a]), conv(s_p[c]) * conv(sef_e[a])) if ens.exact else (
            sef_p[c] / s_p[c]) / (sef_e[a] / s_e[a])
        rhs = Fraction(conv(sf_f[b]) * conv(s_e[a]), conv(s_f[b]) * conv(sf_e[a])) if ens.exact else (
            sf_f[b] / s_f[b]) / (sf_e[a] / s_e[a])
        diff = abs(lhs - rhs)
        num_l.append(float(diff))
        den_l.append(1.0)
        lhs_l.append(float(lhs))
        rhs_l.append(float(rhs))
        oks.append(diff <= tol)
        labels.append(label)
    return _array_report(
        "ratio_assumption", np.array(num_l), np.array(den_l), np.array(lhs_l), np.array(rhs_l), labels, tol,
        skipped=skipped, ok=np.array(oks, dtype=bool),
    )


def history_partition(ens: WorldEnsemble, region: Region) -> np.ndarray:
    """Cell id per world: the partition by histories on ``region``."""
    return ens.classes(region)[0].copy()


def _as_cell_ids(ens: WorldEnsemble, part) -> np.ndarray:
    if isinstance(part, np.ndarray) and part.ndim == 1 and part.shape[0] == ens.n_worlds:
        return part.astype(np.int64)
    ids = np.full(ens.n_worlds, -1, dtype=np.int64)
    for k, cell in enumerate(part):
        for w in cell:
            if ids[w] != -1:
                raise InvalidPartitionError(f"world {w} lies in two cells")
            ids[w] = k
    if np.any(ids < 0):
        raise InvalidPartitionError("partition does not cover every world")
    return ids


def check_strong_SELD(
    ens: WorldEnsemble,
    e: LocalEvent,
    f: LocalEvent,
    h: Hypersurface,
    part,
    variant: int = 2,
    tol: float = DEFAULT_TOL,
) -> CheckReport:
    """Every positive cell of a past-measurable world partition screens ``e`` from ``f``.

    ``part`` is either a cell id per world or a sequence of world-index
    collections.  Cells must be unions of history classes on the past of ``h``
    (variant 1) or on the table mountain of ``e`` (variant 2).  Within a cell
    the initial measure is used, since a cell is meant to carry information
    the time-indexed ``pr_t`` does not already contain.
    """
    lat = ens.lattice
    if variant == 1:
        _seld1_geometry(lat, e.region, f.region, h)
        designated = h.past(lat)
    elif variant == 2:
        _seld2_geometry(lat, e.region, f.region, h)
        designated = h.past(lat) & causal_past(lat, e.region)
    else:
        raise ValueError("variant must be 1 or 2")
    cells = _as_cell_ids(ens, part)
    hid, _ = ens.classes(designated)
    pairs = np.unique(np.stack([hid, cells], axis=1), axis=0)
    if len(np.unique(pairs[:, 0])) != len(pairs):
        raise InvalidPartitionError("a designated-past history class is split across cells")
    _, cell_ids = np.unique(cells, return_inverse=True)
    cell_ids = cell_ids.reshape(-1).astype(np.int64)
    n = int(cell_ids.max()) + 1
    cls, num, den, lhs, rhs = _screening(ens, cell_ids, n, ens.mask(e), ens.mask(f))
    labels = [f"cell {int(c)}" for c in cls]
    null = n - len(cls)
    return _array_report(
        f"strong_SELD{variant}", num, den, lhs, rhs, labels, tol,
        skipped=(f"{null} null cells",) if null else (),
        details={"cells": n},
    )


# ---------------------------------------------------------------------------
# ensemble generators
# ---------------------------------------------------------------------------


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def _all_patterns(k: int) -> np.ndarray:
    codes = np.arange(1 << k, dtype=np.int64)
    return ((codes[:, None] >> np.arange(k)) & 1).astype(np.uint8)


def _common_denominator(values: Iterable[Fraction]) -> int:
    d = 1
    for v in values:
        d = d * v.denominator // math.gcd(d, v.denominator)
    return d


def product_ensemble(
    lattice: LatticeSpacetime, probs: Mapping[Point, object] | object, free: Sequence[Point] | None = None
) -> WorldEnsemble:
    """Independent points.  ``probs`` is one P(1) for all free points or a per-point map.

    Points not in ``free`` are fixed to 0.
    """
    pts = list(lattice.all_points()) if free is None else [tuple(p) for p in free]
    if len(pts) > 20:
        raise InvalidSpaceError("product ensembles are limited to 20 free points")
    if isinstance(probs, Mapping):
        ps = [Fraction(probs[p]) for p in pts]
    else:
        ps = [Fraction(probs)] * len(pts)
    d = _common_denominator(ps)
    pats = _all_patterns(len(pts))
    mass = np.ones(len(pats), dtype=np.int64)
    for j, p in enumerate(ps):
        a = int(p * d)
        mass *= np.where(pats[:, j] == 1, a, d - a)
    total = d ** len(pts)
    worlds = np.zeros((len(pats), lattice.n_points), dtype=np.uint8)
    for j, p in enumerate(pts):
        worlds[:, lattice.index(p)] = pats[:, j]
    keep = mass > 0
    return WorldEnsemble.from_masses(lattice, worlds[keep], mass[keep], total)


def local_ca_ensemble(
    lattice: LatticeSpacetime, initial_p, rule: Sequence, *, rows: int | None = None
) -> WorldEnsemble:
    """Stochastic cellular automaton with nearest-neighbour light-cone updates.

    Row 0 is i.i.d. with P(1) = ``initial_p``.  A later point is 1 with
    probability ``rule[4*left + 2*centre + right]`` of its three parents, with
    off-lattice parents read as 0.  Such dynamics satisfy every locality
    condition exactly.  ``rows`` limits the random rows (later rows are 0).
    """
    T = lattice.T if rows is None else rows
    n = T * lattice.X
    if n > 20:
        raise InvalidSpaceError("CA ensembles are limited to 20 random points")
    rule = [Fraction(r) for r in rule]
    if len(rule) != 8:
        raise InvalidSpaceError("rule needs 8 entries")
    p0 = Fraction(initial_p)
    d = _common_denominator(rule + [p0])
    pats = _all_patterns(n).reshape(-1, T, lattice.X)
    mass = np.ones(len(pats), dtype=np.int64)
    a0 = int(p0 * d)
    mass *= np.prod(np.where(pats[:, 0, :] == 1, a0, d - a0), axis=1)
    num = np.array([int(r * d) for r in rule], dtype=np.int64)
    for t in range(1, T):
        prev = pats[:, t - 1, :].astype(np.int64)
        left = np.pad(prev, ((0, 0), (1, 0)))[:, :-1]
        right = np.pad(prev, ((0, 0), (0, 1)))[:, 1:]
        a = num[4 * left + 2 * prev + right]
        mass *= np.prod(np.where(pats[:, t, :] == 1, a, d - a), axis=1)
    total = d**n
    worlds = np.zeros((len(pats), lattice.n_points), dtype=np.uint8)
    worlds[:, : n] = pats.reshape(len(pats), -1)
    keep = mass > 0
    return WorldEnsemble.from_masses(lattice, worlds[keep], mass[keep], total)


def mixture(ensembles: Sequence[WorldEnsemble], weights: Sequence) -> WorldEnsemble:
    """Convex mixture; the mixing variable is not recorded in the worlds."""
    lat = ensembles[0].lattice
    ws = [Fraction(w) for w in weights]
    if sum(ws) != 1:
        raise InvalidSpaceError("mixture weights must sum to 1")
    if all(e.exact for e in ensembles):
        total = _common_denominator([w / int(e.total) for w, e in zip(ws, ensembles)] + ws)
        masses = [e.mass.astype(np.int64) * int(w * total / int(e.total)) for w, e in zip(ws, ensembles)]
        return WorldEnsemble.from_masses(
            lat, np.concatenate([e.worlds for e in ensembles]), np.concatenate(masses), total
        )
    worlds = np.concatenate([e.worlds for e in ensembles])
    mass = np.concatenate([e.mass / e.total * float(w) for w, e in zip(ws, ensembles)])
    return WorldEnsemble(lat, worlds, list(mass))


def random_sparse_ensemble(
    lattice: LatticeSpacetime, n_worlds: int, seed, *, max_mass: int = 4, free: Sequence[Point] | None = None
) -> WorldEnsemble:
    """``n_worlds`` random distinct configurations with small integer masses."""
    rng = _rng(seed)
    pts = lattice.all_points() if free is None else [tuple(p) for p in free]
    cols = np.array([lattice.index(p) for p in pts], dtype=np.int64)
    n_worlds = min(n_worlds, 1 << len(pts)) if len(pts) < 62 else n_worlds
    seen, rows = set(), []
    while len(rows) < n_worlds:
        bits = rng.integers(0, 2, size=len(pts), dtype=np.uint8)
        key = bits.tobytes()
        if key in seen:
            continue
        seen.add(key)
        row = np.zeros(lattice.n_points, dtype=np.uint8)
        row[cols] = bits
        rows.append(row)
    masses = rng.integers(1, max_mass + 1, size=n_worlds)
    return WorldEnsemble.from_masses(lattice, np.array(rows), masses, int(masses.sum()))
