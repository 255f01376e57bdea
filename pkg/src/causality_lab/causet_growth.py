"""Finite causal sets and classical sequential growth.

A causet of size ``n`` is an ``n x n`` boolean matrix of the strict order.  A
growth step adds one element whose ancestors are exactly a down-closed
*precursor set* ``S``.  Dynamics are given by ``q = (q_0=1, q_1, ...)``; the
transition probability to ``S`` from a causet of size ``n`` is::

    alpha_n(S) = sum_{l=m}^{w} C(w-m, w-l) t_l  /  sum_{j=0}^{n} C(n, j) t_j

with ``w = |S|``, ``m`` its number of maximal elements and
``t_n = sum_k (-1)^(n-k) C(n, k) / q_k``.  The denominator equals ``1/q_n``.

Chain dynamics (``q_k = 0`` for every ``k >= 1``) are the limit in which the
newborn always sits above everything; they are handled as a special case.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import DegenerateDynamicsError, PreconditionError
from .prob_core import DEFAULT_TOL, CheckReport, _Item, build_report, equality_item

# ---------------------------------------------------------------------------
# causets
# ---------------------------------------------------------------------------


def _to_mask(s) -> int:
    return sum(1 << int(i) for i in s)


def _from_mask(mask: int) -> frozenset:
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


class Causet:
    """Finite strict partial order stored as a boolean relation matrix."""

    __slots__ = ("_rel", "_pred", "_code")

    def __init__(self, relation, *, validate: bool = True):
        rel = np.array(relation, dtype=bool)
        if rel.ndim != 2 or rel.shape[0] != rel.shape[1]:
            raise PreconditionError("relation must be a square matrix")
        if validate:
            if np.any(np.diag(rel)):
                raise PreconditionError("relation must be irreflexive")
            if np.any(rel & rel.T):
                raise PreconditionError("relation must be antisymmetric")
            r = rel.astype(np.int64)
            if np.any(((r @ r) > 0) & ~rel):
                raise PreconditionError("relation must be transitive")
        rel.setflags(write=False)
        self._rel = rel
        self._pred = tuple(_to_mask(np.flatnonzero(rel[:, j])) for j in range(rel.shape[0]))
        self._code = None

    # -- basics -----------------------------------------------------------
    @property
    def relation(self) -> np.ndarray:
        return self._rel

    @property
    def n(self) -> int:
        return self._rel.shape[0]

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"Causet(n={self.n}, relations={int(self._rel.sum())})"

    def __eq__(self, other) -> bool:
        return isinstance(other, Causet) and self.n == other.n and self.canonical_code() == other.canonical_code()

    def __hash__(self) -> int:
        return hash((self.n, self.canonical_code()))

    def precedes(self, x: int, y: int) -> bool:
        return bool(self._rel[x, y])

    def past(self, x: int) -> frozenset:
        return _from_mask(self._pred[x])

    def is_natural(self) -> bool:
        return not np.any(np.tril(self._rel))

    @classmethod
    def empty(cls) -> "Causet":
        return cls(np.zeros((0, 0), dtype=bool), validate=False)

    @classmethod
    def chain(cls, n: int) -> "Causet":
        return cls(np.triu(np.ones((n, n), dtype=bool), k=1), validate=False)

    @classmethod
    def antichain(cls, n: int) -> "Causet":
        return cls(np.zeros((n, n), dtype=bool), validate=False)

    def is_down_closed(self, s) -> bool:
        mask = _to_mask(s)
        return all((self._pred[i] & ~mask) == 0 for i in s)

    def maximal_count(self, s) -> int:
        """Number of elements of ``s`` with no successor inside ``s``."""
        s = list(s)
        return sum(1 for i in s if not any(self._rel[i, j] for j in s))

    def add_element(self, s) -> "Causet":
        """New causet with one more element whose ancestors are exactly ``s``."""
        s = frozenset(s)
        if not self.is_down_closed(s):
            raise PreconditionError("precursor set must be ancestor-closed")
        n = self.n
        rel = np.zeros((n + 1, n + 1), dtype=bool)
        rel[:n, :n] = self._rel
        for i in s:
            rel[i, n] = True
        return Causet(rel, validate=False)

    def subcauset(self, s) -> tuple["Causet", dict]:
        """Induced order on ``s`` and the old-to-new index map."""
        idx = sorted(s)
        sub = self._rel[np.ix_(idx, idx)] if idx else np.zeros((0, 0), dtype=bool)
        return Causet(sub, validate=False), {old: new for new, old in enumerate(idx)}

    # -- canonical form ---------------------------------------------------
    def linear_extensions(self) -> Iterator[tuple[int, ...]]:
        """Every natural labelling, as old indices listed in birth order."""
        n = self.n
        pred = self._pred

        def rec(placed: int, order: list):
            if len(order) == n:
                yield tuple(order)
                return
            for v in range(n):
                if not placed >> v & 1 and (pred[v] & ~placed) == 0:
                    order.append(v)
                    yield from rec(placed | 1 << v, order)
                    order.pop()

        yield from rec(0, [])

    def canonical_code(self) -> int:
        """Smallest upper-triangle bit code over all natural labellings."""
        if self._code is None:
            if self.n <= 1:
                self._code = 0
            else:
                if self.n <= _ALL_PERMS_MAX:
                    perms = _all_perms(self.n)
                else:
                    perms = np.array(list(self.linear_extensions()), dtype=np.int64)
                self._code = _kernels.canonical_code(self._rel, perms)
        return self._code

    def canonical(self) -> "Causet":
        return Causet(code_to_relation(self.n, self.canonical_code()), validate=False)

    def to_json_obj(self) -> list:
        return self._rel.astype(int).tolist()

    @classmethod
    def from_json_obj(cls, obj) -> "Causet":
        return cls(np.array(obj, dtype=bool).reshape(len(obj), len(obj)) if obj else np.zeros((0, 0), dtype=bool))


_ALL_PERMS_MAX = 8


@lru_cache(maxsize=None)
def _all_perms(n: int) -> np.ndarray:
    # the kernel skips non-natural labellings itself; cheaper than listing extensions
    return np.array(list(itertools.permutations(range(n))), dtype=np.int64)


def code_to_relation(n: int, code: int) -> np.ndarray:
    rel = np.zeros((n, n), dtype=bool)
    iu, ju = np.triu_indices(n, k=1)
    for b, (i, j) in enumerate(zip(iu, ju)):
        rel[i, j] = bool(code >> b & 1)
    return rel


class LabelledCauset(Causet):
    """Causet whose indices are birth order; carries the growth trajectory."""

    __slots__ = ("trajectory",)

    def __init__(self, relation, trajectory: Sequence = ()):
        super().__init__(relation)
        if not self.is_natural():
            raise PreconditionError("labelling is not natural")
        self.trajectory = tuple(trajectory)


def ancestor_closed_subsets(c: Causet) -> list[frozenset]:
    """All down-closed subsets (precursor sets), including empty and full."""
    return [_from_mask(m) for m in _down_masks(c)]


def _down_masks(c: Causet) -> list[int]:
    pred = c._pred
    out = []
    for mask in range(1 << c.n):
        ok = True
        m = mask
        while m:
            low = m & -m
            i = low.bit_length() - 1
            if pred[i] & ~mask:
                ok = False
                break
            m ^= low
        if ok:
            out.append(mask)
    return out


@lru_cache(maxsize=None)
def _enumerate_codes(n: int) -> tuple[int, ...]:
    if n == 0:
        return (0,)
    seen: dict[int, None] = {}
    for code in _enumerate_codes(n - 1):
        parent = Causet(code_to_relation(n - 1, code), validate=False)
        for s in ancestor_closed_subsets(parent):
            seen.setdefault(parent.add_element(s).canonical_code(), None)
    return tuple(sorted(seen))


def enumerate_causets(n: int) -> list[Causet]:
    """Representatives of every ``n``-element causet up to isomorphism."""
    if n < 0:
        raise PreconditionError("size must be non-negative")
    return list(_representatives(n))


@lru_cache(maxsize=None)
def _representatives(n: int) -> tuple[Causet, ...]:
    return tuple(Causet(code_to_relation(n, c), validate=False) for c in _enumerate_codes(n))


def _labelled_key(c: Causet) -> tuple:
    # Causet equality is up to isomorphism; label-dependent caches need the exact matrix
    return c.n, c.relation.tobytes()


_LABELLED_CACHE_SIZE = 1 << 14
_stats_cache: dict = {}
_paths_cache: dict = {}


def _cached(cache: dict, c: Causet, build):
    key = _labelled_key(c)
    hit = cache.get(key)
    if hit is None:
        if len(cache) >= _LABELLED_CACHE_SIZE:
            cache.clear()
        hit = cache[key] = build(c)
    return hit


def precursor_stats(c: Causet) -> list[tuple[frozenset, int, int]]:
    """``(S, |S|, maximal count)`` for every precursor set of ``c``."""
    return list(_cached(_stats_cache, c, _build_stats))


def _build_stats(c: Causet) -> tuple:
    return tuple((s, len(s), c.maximal_count(s)) for s in ancestor_closed_subsets(c))


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def t_params(q: Sequence) -> tuple:
    """Binomial inversion of ``q``; needs ``q_0 = 1`` and every ``q_k > 0``."""
    q = tuple(q)
    if not q or q[0] != 1:
        raise DegenerateDynamicsError("q_0 must be 1")
    if any(v <= 0 for v in q):
        raise DegenerateDynamicsError("t parameters need every q_k > 0")
    one = q[0] if isinstance(q[0], Fraction) else 1
    t = []
    for n in range(len(q)):
        t.append(sum(((-1) ** (n - k) * comb(n, k) * (one / q[k]) for k in range(n + 1)), 0 * one))
    return tuple(t)


def _coerce_q(q) -> tuple:
    vals = list(q)
    if all(isinstance(v, (int, Fraction, str)) and not isinstance(v, bool) for v in vals):
        return tuple(Fraction(v) for v in vals)
    return tuple(float(v) for v in vals)


@dataclass(frozen=True)
class GrowthDynamics:
    """Sequential growth dynamics defined by ``q_0 = 1, q_1, ..., q_max``."""

    q: tuple

    def __post_init__(self):
        q = _coerce_q(self.q)
        object.__setattr__(self, "q", q)
        if not q or q[0] != 1:
            raise DegenerateDynamicsError("q_0 must be 1")
        if any(v < 0 or v > 1 for v in q):
            raise DegenerateDynamicsError("every q_k must lie in [0, 1]")
        zeros = [v == 0 for v in q[1:]]
        if any(zeros) and not all(zeros):
            raise DegenerateDynamicsError("q has zeros at some ranks but not others; only the chain limit is admitted")

    @property
    def is_chain(self) -> bool:
        return len(self.q) > 1 and all(v == 0 for v in self.q[1:])

    @property
    def max_rank(self) -> int:
        return len(self.q) - 1

    @property
    def exact(self) -> bool:
        return isinstance(self.q[0], Fraction)

    @property
    def t(self) -> tuple:
        if self.is_chain:
            raise DegenerateDynamicsError("chain dynamics have no finite t parameters")
        return t_params(self.q)

    def is_valid(self) -> bool:
        """All transition probabilities are non-negative (every ``t_l >= 0``)."""
        return self.is_chain or all(v >= 0 for v in self.t)

    @classmethod
    def from_t(cls, t: Sequence) -> "GrowthDynamics":
        """``q_n = 1 / sum_j C(n, j) t_j`` for non-negative ``t`` with ``t_0 = 1``."""
        t = _coerce_q(t)
        if t[0] != 1 or any(v < 0 for v in t):
            raise DegenerateDynamicsError("t needs t_0 = 1 and non-negative entries")
        return cls(tuple(1 / sum(comb(n, j) * t[j] for j in range(n + 1)) for n in range(len(t))))

    @classmethod
    def percolation(cls, t1, max_rank: int) -> "GrowthDynamics":
        """Transitive percolation: ``t_n = t1**n``."""
        t1 = Fraction(t1) if isinstance(t1, (int, Fraction, str)) else float(t1)
        return cls.from_t([t1**n for n in range(max_rank + 1)])

    @classmethod
    def antichain(cls, max_rank: int) -> "GrowthDynamics":
        return cls((Fraction(1),) * (max_rank + 1))

    @classmethod
    def chain(cls, max_rank: int) -> "GrowthDynamics":
        return cls((Fraction(1),) + (Fraction(0),) * max_rank)

    def extended_percolation(self, max_rank: int) -> "GrowthDynamics":
        """Extend to ``max_rank`` when the given ranks are transitive percolation."""
        if max_rank <= self.max_rank:
            return self
        if self.is_chain:
            return GrowthDynamics(self.q + (self.q[1] * 0,) * (max_rank - self.max_rank))
        t = self.t
        t1 = t[1] if len(t) > 1 else None
        if t1 is None or any(t[n] != t1**n for n in range(len(t))):
            raise PreconditionError(
                f"q is given only to rank {self.max_rank} and is not transitive percolation; cannot extend"
            )
        return GrowthDynamics.percolation(t1, max_rank)

    def to_json_obj(self) -> list:
        return [str(v) if isinstance(v, Fraction) else v for v in self.q]


def _numerator(w: int, m: int, t: tuple):
    return sum((comb(w - m, w - l) * t[l] for l in range(m, w + 1)), 0 * t[0])


def alpha(n: int, w: int, m: int, dyn: GrowthDynamics):
    """Transition probability from a size-``n`` causet to a precursor set with
    ``w`` elements of which ``m`` are maximal."""
    if not (0 <= m <= w <= n):
        raise PreconditionError(f"need 0 <= m <= w <= n, got m={m}, w={w}, n={n}")
    if (w == 0) != (m == 0):
        raise PreconditionError("a nonempty precursor set has at least one maximal element")
    if n > dyn.max_rank:
        raise PreconditionError(f"dynamics are defined only through rank {dyn.max_rank}")
    return _alpha_cached(dyn.q, n, w, m)


@lru_cache(maxsize=1 << 16)
def _t_cached(q: tuple) -> tuple:
    return t_params(q)


@lru_cache(maxsize=1 << 16)
def _alpha_cached(q: tuple, n: int, w: int, m: int):
    one = q[0]
    if all(v == 0 for v in q[1:]) and len(q) > 1:
        return one if w == n else 0 * one
    t = _t_cached(q)
    den = sum((comb(n, j) * t[j] for j in range(n + 1)), 0 * one)
    return _numerator(w, m, t) / den


def transition_distribution(c: Causet, dyn: GrowthDynamics) -> dict[frozenset, object]:
    return {s: alpha(c.n, w, m, dyn) for s, w, m in precursor_stats(c)}


def grow(dyn: GrowthDynamics, steps: int, seed: int) -> LabelledCauset:
    """Sample a labelled causet with ``steps`` elements.

    The trajectory lists ``(stage, precursor set, probability)``.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    if steps - 1 > dyn.max_rank:
        raise PreconditionError(f"{steps} steps need q through rank {steps - 1}")
    c = Causet.empty()
    log = []
    for stage in range(steps):
        dist = transition_distribution(c, dyn)
        keys = list(dist)
        probs = np.array([float(dist[k]) for k in keys])
        cum = np.cumsum(probs)
        u = rng.random() * cum[-1]
        k = int(min(np.searchsorted(cum, u, side="right"), len(keys) - 1))
        while probs[k] == 0:  # never select an impossible transition
            k -= 1
        log.append((stage, tuple(sorted(keys[k])), dist[keys[k]]))
        c = c.add_element(keys[k])
    return LabelledCauset(c.relation, log)


# ---------------------------------------------------------------------------
# verifiers
# ---------------------------------------------------------------------------


def _describe(c: Causet) -> str:
    return f"n{c.n}:{c.canonical_code()}"


def path_products(c: Causet, dyn: GrowthDynamics) -> dict[tuple[int, ...], object]:
    """Probability product of every labelled growth path that ends in ``c``."""
    out = {}
    for order, steps in _cached(_paths_cache, c, _build_path_stats):
        p = dyn.q[0]
        for k, w, m in steps:
            p = p * alpha(k, w, m, dyn)
        out[order] = p
    return out


def _build_path_stats(c: Causet) -> tuple:
    paths = []
    for order in c.linear_extensions():
        steps = []
        for k, v in enumerate(order):
            s = c.past(v)
            steps.append((k, len(s), c.maximal_count(s)))
        paths.append((order, tuple(steps)))
    return tuple(paths)


def check_dgc(dyn: GrowthDynamics, max_rank: int, tol: float = DEFAULT_TOL) -> CheckReport:
    """Every birth order of every causet up to ``max_rank`` has the same probability."""
    items = []
    for n in range(2, max_rank + 1):
        for c in enumerate_causets(n):
            prods = list(path_products(c, dyn).values())
            hi, lo = max(prods), min(prods)
            items.append(equality_item((_describe(c),), hi, lo, tol, note=f"{len(prods)} paths"))
    return build_report("discrete_general_covariance", items, tol)


def check_bell_causality(dyn: GrowthDynamics, max_rank: int, tol: float = DEFAULT_TOL) -> CheckReport:
    """Ratios of transition probabilities depend only on the two precursor sets.

    For each causet and each pair of precursor sets with positive
    probability, the ratio is recomputed in the causet formed by their union.
    """
    items = []
    for n in range(0, max_rank + 1):
        for c in enumerate_causets(n):
            a_c = transition_distribution(c, dyn)
            subs = list(a_c)
            for s1, s2 in itertools.combinations(subs, 2):
                if a_c[s1] == 0 or a_c[s2] == 0:
                    continue
                b, idx = c.subcauset(s1 | s2)
                t1 = frozenset(idx[i] for i in s1)
                t2 = frozenset(idx[i] for i in s2)
                a1 = alpha(b.n, len(t1), b.maximal_count(t1), dyn)
                a2 = alpha(b.n, len(t2), b.maximal_count(t2), dyn)
                items.append(equality_item(
                    (_describe(c), str(sorted(s1)), str(sorted(s2))), a_c[s1] / a_c[s2], a1 / a2, tol,
                ))
    return build_report("bell_causality", items, tol)


def check_markov_sum_rule(dyn: GrowthDynamics, max_rank: int, tol: float = 0.0) -> CheckReport:
    """Transition probabilities out of every causet of size ``<= max_rank`` sum to one."""
    items = []
    for n in range(0, max_rank + 1):
        for c in enumerate_causets(n):
            total = sum(transition_distribution(c, dyn).values())
            items.append(equality_item((_describe(c),), total, dyn.q[0], tol))
    return build_report("markov_sum_rule", items, tol)


def check_inversion_identity(dyn: GrowthDynamics, tol: float = 0.0) -> CheckReport:
    """``sum_j C(n, j) t_j == 1/q_n`` at every rank."""
    t = dyn.t
    items = []
    for n in range(len(t)):
        lhs = sum(comb(n, j) * t[j] for j in range(n + 1))
        items.append(equality_item((f"rank {n}",), lhs, 1 / dyn.q[n], tol))
    return build_report("inversion_identity", items, tol)


def _base_transition(c: Causet, s: frozenset, dyn: GrowthDynamics):
    """Probability of growing the precursor set, taken as a causet on its own,
    by an element above all of it."""
    b, _ = c.subcauset(s)
    return alpha(b.n, b.n, b.maximal_count(range(b.n)), dyn)


def check_strong_sel(dyn: GrowthDynamics, max_rank: int, tol: float = DEFAULT_TOL) -> CheckReport:
    """Each positive transition C -> C1 must equal B -> B1, with B the precursor set.

    ``details['sum_rule_witness']`` records a causet whose transitions, pinned
    this way, do not sum to one.
    """
    items = []
    for n in range(0, max_rank + 1):
        for c in enumerate_causets(n):
            for s, w, m in precursor_stats(c):
                a = alpha(n, w, m, dyn)
                if a == 0:
                    continue
                base = _base_transition(c, s, dyn)
                items.append(equality_item((_describe(c), str(sorted(s))), a, base, tol))
    witness = sum_rule_witness(dyn, max_rank, tol)
    return build_report("strong_sel", items, tol, details={"sum_rule_witness": witness})


def pinned_sum(c: Causet, dyn: GrowthDynamics, within=None):
    """Total of the positive transitions out of ``c`` after pinning each to its
    precursor-set base value.  ``within`` restricts to precursors inside a subset."""
    total = dyn.q[0] * 0
    for s in ancestor_closed_subsets(c):
        if within is not None and not s <= within:
            continue
        if alpha(c.n, len(s), c.maximal_count(s), dyn) != 0:
            total += _base_transition(c, s, dyn)
    return total


def with_spacelike_point(b: Causet) -> Causet:
    """``b`` plus one element unrelated to all of it."""
    rel = np.zeros((b.n + 1, b.n + 1), dtype=bool)
    rel[: b.n, : b.n] = b.relation
    return Causet(rel, validate=False)


def sum_rule_witness(dyn: GrowthDynamics, max_rank: int, tol: float = DEFAULT_TOL) -> dict | None:
    """Base ``B`` and extension ``C = B + spacelike point`` whose pinned
    transitions cannot all hold.

    Pinning sends the transitions of ``C`` that stay inside ``B`` to the
    transitions of ``B`` itself, which already sum to one, while the remaining
    positive transitions keep positive pinned values.
    """
    for n in range(1, max_rank):
        for b in enumerate_causets(n):
            c = with_spacelike_point(b)
            base = frozenset(range(b.n))
            total = pinned_sum(c, dyn)
            if abs(total - 1) > tol:
                return {
                    "base": b.to_json_obj(),
                    "extended": c.to_json_obj(),
                    "pinned_sum_within_base": float(pinned_sum(c, dyn, within=base)),
                    "pinned_sum": float(total),
                    "actual_sum_within_base": float(
                        sum(alpha(c.n, len(s), c.maximal_count(s), dyn) for s in ancestor_closed_subsets(b))
                    ),
                }
    return None


@dataclass
class StrongSelSearch:
    """Result of a grid search for dynamics obeying strong SEL."""

    solutions: list
    max_rank: int
    grid: Fraction
    searched: int = 0
    invalid: int = 0
    degenerate_excluded: int = 0
    scope: str = "q-sequences on the grid, q_0 = 1, Markovian sequential growth"
    solution_kinds: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self) -> int:
        return len(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]

    def to_json_obj(self) -> dict:
        return {
            "solutions": [d.to_json_obj() for d in self.solutions],
            "kinds": self.solution_kinds,
            "max_rank": self.max_rank,
            "grid": str(self.grid),
            "searched": self.searched,
            "invalid": self.invalid,
            "degenerate_excluded": self.degenerate_excluded,
            "scope": self.scope,
        }


def _strong_sel_rank_ok(dyn: GrowthDynamics, n: int) -> bool:
    for c in enumerate_causets(n):
        for s, w, m in precursor_stats(c):
            a = alpha(n, w, m, dyn)
            if a != 0 and a != _base_transition(c, s, dyn):
                return False
    return True


def strong_sel_solutions(max_rank: int = 3, grid="1/100") -> StrongSelSearch:
    """Exact rank-by-rank search over ``q_k`` in {0, grid, 2 grid, ..., 1}.

    A prefix survives rank ``k`` only if it is a valid dynamics and every
    positive transition out of every size-``k`` causet satisfies strong SEL.
    Mixed zero patterns are excluded as degenerate.
    """
    step = Fraction(grid)
    if step <= 0 or 1 % step != 0:
        raise PreconditionError("grid must divide 1")
    values = [k * step for k in range(int(1 / step) + 1)]
    result = StrongSelSearch([], max_rank, step)
    prefixes = [(Fraction(1),)]
    if not _strong_sel_rank_ok(GrowthDynamics(prefixes[0]), 0):
        prefixes = []
    for rank in range(1, max_rank + 1):
        nxt = []
        for pre in prefixes:
            for v in values:
                result.searched += 1
                try:
                    dyn = GrowthDynamics(pre + (v,))
                except DegenerateDynamicsError:
                    result.degenerate_excluded += 1
                    continue
                if not dyn.is_valid():
                    result.invalid += 1
                    continue
                if _strong_sel_rank_ok(dyn, rank):
                    nxt.append(pre + (v,))
        prefixes = nxt
    result.solutions = [GrowthDynamics(p) for p in prefixes]
    result.solution_kinds = [
        "chain" if d.is_chain else "antichain" if all(v == 1 for v in d.q) else "interior" for d in result.solutions
    ]
    return result


def random_rational_dynamics(rng: np.random.Generator, max_rank: int, max_num: int = 9) -> GrowthDynamics:
    """Valid dynamics from random non-negative rational ``t`` (``t_0 = 1``)."""
    t = [Fraction(1)] + [
        Fraction(int(rng.integers(0, max_num + 1)), int(rng.integers(1, max_num + 1))) for _ in range(max_rank)
    ]
    return GrowthDynamics.from_t(t)
