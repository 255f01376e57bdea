"""Hidden-variable models of the two-wing Bell experiment.

Two representations are supported:

* :class:`HVModel` keeps kernels as arrays indexed by hidden state ``lam``
  and settings.  Outcome index 0 means +1 and index 1 means -1, so
  ``joint[lam, x, y, 0, 1]`` is P(X=+1, Y=-1 | lam, x, y).
* :class:`BigSpaceModel` is a single :class:`ProbabilitySpace` over tuples
  (lam, x, y, X, Y), with designated events for each component.

Also here: locality checks (fine and coarse grained), CHSH and Bell-Wigner
evaluators, the singlet oracle, the determinization of factorizable
anticorrelated models, the many-cause model built by four doublings of a
16-atom space, and an embedding of a model into a lattice world ensemble.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import _kernels
from .errors import ArityError, ModelIncompleteError, NoSolutionError, PreconditionError
from .prob_core import (
    DEFAULT_TOL,
    CheckReport,
    Event,
    Partition,
    ProbabilitySpace,
    build_report,
    cond_prob,
    correlation,
    equality_item,
)

KERNEL_TOL = 1e-12
SIGN = ("+", "-")


# ---------------------------------------------------------------------------
# settings and models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SettingsGeometry:
    """Measurement directions (radians) on each wing."""

    left: tuple[float, ...]
    right: tuple[float, ...]
    left_labels: tuple[str, ...] = ()
    right_labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "left", tuple(float(a) for a in self.left))
        object.__setattr__(self, "right", tuple(float(a) for a in self.right))
        if not self.left_labels:
            object.__setattr__(self, "left_labels", tuple(f"a{i + 1}" for i in range(len(self.left))))
        if not self.right_labels:
            object.__setattr__(self, "right_labels", tuple(f"b{i + 1}" for i in range(len(self.right))))

    @classmethod
    def chsh_optimal(cls) -> "SettingsGeometry":
        return cls((0.0, math.pi / 2), (math.pi / 4, 3 * math.pi / 4))

    @classmethod
    def from_angles(cls, a1: float, a2: float, b1: float, b2: float) -> "SettingsGeometry":
        return cls((a1, a2), (b1, b2))

    @classmethod
    def shared(cls, angles: Sequence[float], labels: Sequence[str]) -> "SettingsGeometry":
        """Same directions available on both wings (for Bell-Wigner tests)."""
        return cls(tuple(angles), tuple(angles), tuple(labels), tuple(labels))


@dataclass(frozen=True, eq=False)
class HVModel:
    """Stochastic hidden-variable model.

    ``rho`` (L,), ``left`` (L, nL) and ``right`` (L, nR) hold P(+1) for the
    single-wing kernels; ``joint`` is (L, nL, nR, 2, 2).  NaN entries mark
    kernels the model does not define.
    """

    rho: np.ndarray
    left: np.ndarray
    right: np.ndarray
    joint: np.ndarray
    left_labels: tuple[str, ...] = ()
    right_labels: tuple[str, ...] = ()
    lambda_labels: tuple[str, ...] = ()

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=np.float64)
        left = np.asarray(self.left, dtype=np.float64)
        right = np.asarray(self.right, dtype=np.float64)
        joint = np.asarray(self.joint, dtype=np.float64)
        L = rho.shape[0]
        if left.ndim != 2 or right.ndim != 2 or left.shape[0] != L or right.shape[0] != L:
            raise ArityError("kernel arrays must be (L, settings)")
        if joint.shape != (L, left.shape[1], right.shape[1], 2, 2):
            raise ArityError(f"joint kernel must have shape {(L, left.shape[1], right.shape[1], 2, 2)}")
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > KERNEL_TOL:
            raise PreconditionError("rho must be a probability vector")
        for arr in (left, right):
            ok = np.isnan(arr) | ((arr >= -KERNEL_TOL) & (arr <= 1 + KERNEL_TOL))
            if not ok.all():
                raise PreconditionError("single kernels must lie in [0, 1]")
        sums = joint.sum(axis=(3, 4))
        defined = ~np.isnan(sums)
        if np.any(joint[~np.isnan(joint)] < -KERNEL_TOL) or np.any(np.abs(sums[defined] - 1.0) > KERNEL_TOL):
            raise PreconditionError("joint kernels must be probability distributions")
        for name, arr in (("rho", rho), ("left", left), ("right", right), ("joint", joint)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.left_labels:
            object.__setattr__(self, "left_labels", tuple(f"a{i + 1}" for i in range(left.shape[1])))
        if not self.right_labels:
            object.__setattr__(self, "right_labels", tuple(f"b{i + 1}" for i in range(right.shape[1])))
        if not self.lambda_labels:
            object.__setattr__(self, "lambda_labels", tuple(f"l{i}" for i in range(L)))

    @property
    def n_lambda(self) -> int:
        return self.rho.shape[0]

    def left_index(self, x) -> int:
        if isinstance(x, (int, np.integer)):
            return int(x)
        try:
            return self.left_labels.index(x)
        except ValueError:
            raise ModelIncompleteError(f"no left setting {x!r}") from None

    def right_index(self, y) -> int:
        if isinstance(y, (int, np.integer)):
            return int(y)
        try:
            return self.right_labels.index(y)
        except ValueError:
            raise ModelIncompleteError(f"no right setting {y!r}") from None

    @classmethod
    def product(cls, rho, left, right, **labels) -> "HVModel":
        """Factorizable model whose joints are products of the singles."""
        left = np.asarray(left, dtype=np.float64)
        right = np.asarray(right, dtype=np.float64)
        lp = np.stack([left, 1 - left], axis=-1)
        rp = np.stack([right, 1 - right], axis=-1)
        joint = lp[:, :, None, :, None] * rp[:, None, :, None, :]
        return cls(np.asarray(rho, dtype=np.float64), left, right, joint, **labels)

    @classmethod
    def from_joint(cls, rho, joint, **labels) -> "HVModel":
        """Singles read off the joint (left at the first right setting and vice versa)."""
        joint = np.asarray(joint, dtype=np.float64)
        left = joint[:, :, 0, 0, :].sum(axis=-1)
        right = joint[:, 0, :, :, 0].sum(axis=-1)
        return cls(np.asarray(rho, dtype=np.float64), left, right, joint, **labels)

    def to_json_obj(self) -> dict:
        def arr(a):
            return np.where(np.isnan(a), None, a).tolist()

        return {
            "rho": self.rho.tolist(),
            "left": arr(self.left),
            "right": arr(self.right),
            "joint": arr(self.joint),
            "left_labels": list(self.left_labels),
            "right_labels": list(self.right_labels),
            "lambda_labels": list(self.lambda_labels),
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "HVModel":
        def arr(a):
            return np.array(a, dtype=np.float64)

        return cls(
            arr(obj["rho"]), arr(obj["left"]), arr(obj["right"]), arr(obj["joint"]),
            left_labels=tuple(obj.get("left_labels", ())),
            right_labels=tuple(obj.get("right_labels", ())),
            lambda_labels=tuple(obj.get("lambda_labels", ())),
        )


def singlet_oracle(geom: SettingsGeometry) -> HVModel:
    """Quantum singlet statistics as a one-state model.

    P(+,+) = P(-,-) = sin^2(d/2)/2 and P(+,-) = P(-,+) = cos^2(d/2)/2 with d
    the angle between the two directions.
    """
    a = np.asarray(geom.left)[:, None]
    b = np.asarray(geom.right)[None, :]
    same = 0.5 * np.sin((a - b) / 2) ** 2
    diff = 0.5 * np.cos((a - b) / 2) ** 2
    joint = np.stack([np.stack([same, diff], -1), np.stack([diff, same], -1)], -2)[None]
    left = np.full((1, len(geom.left)), 0.5)
    right = np.full((1, len(geom.right)), 0.5)
    return HVModel(np.ones(1), left, right, joint, geom.left_labels, geom.right_labels, ("psi",))


def no_signalling_joint(p: float, q: float, c: float) -> np.ndarray:
    """2x2 joint with P(X=+)=p, P(Y=+)=q and covariance ``c``."""
    return np.array([[p * q + c, p * (1 - q) - c], [(1 - p) * q - c, (1 - p) * (1 - q) + c]])


# ---------------------------------------------------------------------------
# random models
# ---------------------------------------------------------------------------


def random_factorizable_model(rng: np.random.Generator, n_lambda: int = 3, n_left: int = 2, n_right: int = 2) -> HVModel:
    rho = rng.dirichlet(np.ones(n_lambda))
    return HVModel.product(rho, rng.random((n_lambda, n_left)), rng.random((n_lambda, n_right)))


def random_no_signalling_model(rng: np.random.Generator, n_lambda: int = 3) -> HVModel:
    """Parameter independent but (generically) outcome dependent."""
    rho = rng.dirichlet(np.ones(n_lambda))
    left, right = rng.random((n_lambda, 2)), rng.random((n_lambda, 2))
    joint = np.empty((n_lambda, 2, 2, 2, 2))
    for l, x, y in itertools.product(range(n_lambda), range(2), range(2)):
        p, q = left[l, x], right[l, y]
        lo, hi = max(-p * q, -(1 - p) * (1 - q)), min(p * (1 - q), (1 - p) * q)
        joint[l, x, y] = no_signalling_joint(p, q, rng.uniform(lo, hi))
    return HVModel(rho, left, right, joint)


def random_generic_model(rng: np.random.Generator, n_lambda: int = 3) -> HVModel:
    """Arbitrary joints with singles taken from independent draws (PI fails generically)."""
    rho = rng.dirichlet(np.ones(n_lambda))
    joint = rng.dirichlet(np.ones(4), size=(n_lambda, 2, 2)).reshape(n_lambda, 2, 2, 2, 2)
    return HVModel(rho, rng.random((n_lambda, 2)), rng.random((n_lambda, 2)), joint)


def deterministic_vertices(n_left: int = 2, n_right: int = 2) -> list[HVModel]:
    """Every one-state model with 0/1 single kernels (16 for two settings a side)."""
    out = []
    for lv in itertools.product((0.0, 1.0), repeat=n_left):
        for rv in itertools.product((0.0, 1.0), repeat=n_right):
            out.append(HVModel.product(np.ones(1), np.array([lv]), np.array([rv])))
    return out


# ---------------------------------------------------------------------------
# observables and inequalities
# ---------------------------------------------------------------------------


def observable_joint(model: HVModel, x, y) -> np.ndarray:
    """Average the joint kernel at ``(x, y)`` over rho."""
    i, j = model.left_index(x), model.right_index(y)
    if not (0 <= i < model.joint.shape[1] and 0 <= j < model.joint.shape[2]):
        raise ModelIncompleteError(f"no kernel for settings ({x!r}, {y!r})")
    k = model.joint[:, i, j]
    if np.isnan(k[model.rho > 0]).any():
        raise ModelIncompleteError(f"joint kernel at ({x!r}, {y!r}) is undefined")
    return np.einsum("l,lab->ab", model.rho, np.nan_to_num(k))


def observable_joints(model: HVModel) -> np.ndarray:
    """All observable joints, shape (nL, nR, 2, 2)."""
    nl, nr = model.joint.shape[1:3]
    return np.array([[observable_joint(model, i, j) for j in range(nr)] for i in range(nl)])


def correlator(joint: np.ndarray) -> float:
    j = np.asarray(joint)
    return float(j[0, 0] + j[1, 1] - j[0, 1] - j[1, 0])


def _as_chsh_array(joints) -> np.ndarray:
    if isinstance(joints, HVModel):
        return observable_joints(joints)[:2, :2]
    if isinstance(joints, Mapping):
        keys = list(joints)
        lefts = sorted({k[0] for k in keys})
        rights = sorted({k[1] for k in keys})
        if len(lefts) != 2 or len(rights) != 2:
            raise ArityError("CHSH needs exactly two settings per wing")
        return np.array([[np.asarray(joints[(x, y)], dtype=np.float64) for y in rights] for x in lefts])
    arr = np.asarray(joints, dtype=np.float64)
    if arr.shape != (2, 2, 2, 2):
        raise ArityError("joints must have shape (2, 2, 2, 2)")
    return arr


def chsh_value(joints) -> float:
    """S = E11 - E12 + E21 + E22 for joints indexed ``[x, y, X, Y]``."""
    return float(_kernels.chsh_batch(_as_chsh_array(joints)[None])[0])


def chsh_batch(joints: np.ndarray) -> np.ndarray:
    return _kernels.chsh_batch(np.asarray(joints, dtype=np.float64))


def _joint_lookup(source, x, y) -> np.ndarray:
    if isinstance(source, HVModel):
        return observable_joint(source, x, y)
    return np.asarray(source[(x, y)], dtype=np.float64)


def bell_wigner_check(source, settings: Sequence[str] = ("a", "b", "c"), tol: float = DEFAULT_TOL) -> CheckReport:
    """P(a+, b+) + P(b+, c+) >= P(a+, c+), given perfect anticorrelation.

    ``source`` is a model whose two wings share the labels in ``settings`` or a
    mapping from label pairs to 2x2 joints that includes the parallel pairs.
    """
    a, b, c = settings
    for s in settings:
        try:
            par = _joint_lookup(source, s, s)
        except (KeyError, ModelIncompleteError) as exc:
            raise PreconditionError(f"missing parallel joint for {s!r}") from exc
        if par[0, 0] > tol or par[1, 1] > tol:
            raise PreconditionError(f"no perfect anticorrelation at parallel setting {s!r}")
    pab = _joint_lookup(source, a, b)[0, 0]
    pbc = _joint_lookup(source, b, c)[0, 0]
    pac = _joint_lookup(source, a, c)[0, 0]
    lhs, rhs = pab + pbc, pac
    gap = max(0.0, rhs - lhs)
    from .prob_core import _Item

    item = _Item((f"{a}+{b}+", f"{b}+{c}+", f"{a}+{c}+"), lhs, rhs, gap, bool(lhs >= rhs - tol), "sum vs single")
    return build_report("bell_wigner", [item], tol, details={"P_ab": pab, "P_bc": pbc, "P_ac": pac})


# ---------------------------------------------------------------------------
# fine-grained locality
# ---------------------------------------------------------------------------


def _kernel_report(name: str, res: np.ndarray, lhs: np.ndarray, rhs: np.ndarray, labels, tol, details=None):
    from .spacetime_sel import _array_report

    flat = np.nan_to_num(res.reshape(-1), nan=0.0)
    lhs, rhs = lhs.reshape(-1), rhs.reshape(-1)
    return _array_report(name, flat, np.ones_like(flat), lhs, rhs, labels, tol, details=details)


def _index_labels(model: HVModel, shape, kind):
    lam, lft, rgt = model.lambda_labels, model.left_labels, model.right_labels

    def label(i):
        idx = np.unravel_index(i, shape)
        parts = [lam[idx[0]], lft[idx[1]], rgt[idx[2]]]
        if len(idx) > 3:
            parts.append("".join(SIGN[k] for k in idx[3:]))
        return f"{kind}:" + ",".join(parts)

    return label


def check_parameter_independence(model: HVModel, tol: float = DEFAULT_TOL) -> CheckReport:
    """Single-wing kernels do not depend on the distant setting."""
    j = model.joint
    lmarg = j[:, :, :, 0, :].sum(axis=-1)  # (L, nL, nR): P(X=+|lam,x,y)
    rmarg = j[:, :, :, :, 0].sum(axis=-1)
    lres = np.abs(model.left[:, :, None] - lmarg)
    rres = np.abs(model.right[:, None, :] - rmarg)
    res = np.concatenate([lres.reshape(-1), rres.reshape(-1)])
    lhs = np.concatenate([np.broadcast_to(model.left[:, :, None], lmarg.shape).reshape(-1),
                          np.broadcast_to(model.right[:, None, :], rmarg.shape).reshape(-1)])
    rhs = np.concatenate([lmarg.reshape(-1), rmarg.reshape(-1)])
    n = lres.size
    left_label = _index_labels(model, lres.shape, "left")
    right_label = _index_labels(model, rres.shape, "right")
    labels = lambda i: left_label(i) if i < n else right_label(i - n)
    return _kernel_report("parameter_independence", res, lhs, rhs, labels, tol)


def check_outcome_independence(model: HVModel, tol: float = DEFAULT_TOL) -> CheckReport:
    """Joint kernels factor into their own marginals."""
    j = model.joint
    px = j.sum(axis=4)  # (L,nL,nR,2)
    py = j.sum(axis=3)
    prod = px[..., :, None] * py[..., None, :]
    res = np.abs(j - prod)
    return _kernel_report(
        "outcome_independence", res, j, prod, _index_labels(model, res.shape, "joint"), tol
    )


def check_factorizability(model: HVModel, tol: float = DEFAULT_TOL) -> CheckReport:
    """Joint kernels are products of the single-wing kernels.

    ``details`` records the PI and OI verdicts on the same model and whether
    the factorizability verdict equals their conjunction.
    """
    lp = np.stack([model.left, 1 - model.left], axis=-1)
    rp = np.stack([model.right, 1 - model.right], axis=-1)
    prod = lp[:, :, None, :, None] * rp[:, None, :, None, :]
    res = np.abs(model.joint - prod)
    pi = check_parameter_independence(model, tol)
    oi = check_outcome_independence(model, tol)
    rep = _kernel_report(
        "factorizability", res, model.joint, prod, _index_labels(model, res.shape, "joint"), tol,
    )
    rep.details.update(
        {
            "parameter_independence": pi.holds,
            "outcome_independence": oi.holds,
            "equals_pi_and_oi": rep.holds == (pi.holds and oi.holds),
        }
    )
    return rep


def determinize(model: HVModel, tol: float = DEFAULT_TOL, parallel: Sequence[tuple] | None = None) -> HVModel:
    """Deterministic model with the same observable joints.

    Perfect anticorrelation at the ``parallel`` setting pairs (default: pairs
    with equal labels on both wings) forces those kernels to 0/1 on every
    state of positive weight.  Remaining stochastic kernels are independent
    given the state, so each state splits into deterministic sub-states
    weighted by the products of their kernel values.
    """
    if not check_factorizability(model, tol).holds:
        raise PreconditionError("determinize needs a factorizable model")
    if parallel is None:
        parallel = [(x, x) for x in model.left_labels if x in model.right_labels]
    for x, y in parallel:
        joint = observable_joint(model, x, y)
        if joint[0, 0] > tol or joint[1, 1] > tol:
            raise PreconditionError(f"no perfect anticorrelation at ({x}, {y})")

    def snap(v):
        if abs(v) <= tol:
            return 0.0
        if abs(v - 1) <= tol:
            return 1.0
        return float(v)

    rho_out, left_out, right_out, names = [], [], [], []
    for l in range(model.n_lambda):
        if model.rho[l] <= 0:
            continue
        singles = [snap(v) for v in model.left[l]] + [snap(v) for v in model.right[l]]
        choices = [(1.0,) if v == 1.0 else (0.0,) if v == 0.0 else (1.0, 0.0) for v in singles]
        for combo in itertools.product(*choices):
            w = model.rho[l]
            for v, c in zip(singles, combo):
                w *= v if c == 1.0 else 1 - v
            if w <= 0:
                continue
            rho_out.append(w)
            nl = model.left.shape[1]
            left_out.append(combo[:nl])
            right_out.append(combo[nl:])
            names.append(f"{model.lambda_labels[l]}/" + "".join("1" if c else "0" for c in combo))
    rho = np.array(rho_out)
    rho = rho / rho.sum()
    return HVModel.product(
        rho, np.array(left_out), np.array(right_out),
        left_labels=model.left_labels, right_labels=model.right_labels, lambda_labels=tuple(names),
    )


# ---------------------------------------------------------------------------
# big-space representation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BigSpaceModel:
    """One probability space over (lam, x, y, X, Y) outcomes of the whole experiment."""

    space: ProbabilitySpace
    lambda_events: Mapping[str, Event]
    left_choice: Mapping[str, Event]
    right_choice: Mapping[str, Event]
    left_plus: Event
    right_plus: Event

    def outcome(self, wing: str, setting: str, sign: str = "+") -> Event:
        """Event like A1 (left setting a1, outcome +1)."""
        if wing == "left":
            plus, choice = self.left_plus, self.left_choice[setting]
        else:
            plus, choice = self.right_plus, self.right_choice[setting]
        out = plus if sign == "+" else self.space.complement(plus)
        name = setting.upper() + ("" if sign == "+" else "-")
        return Event((choice & out).labels, name)

    def lambda_partition(self) -> Partition:
        return Partition(tuple(self.lambda_events.values()))

    def push(self, amap: Mapping, space: ProbabilitySpace) -> "BigSpaceModel":
        """Carry all designated events through an atom map into ``space``."""

        def p(e: Event) -> Event:
            out: set = set()
            for l in e.labels:
                out |= amap[l]
            return Event(frozenset(out), e.name)

        return BigSpaceModel(
            space,
            {k: p(v) for k, v in self.lambda_events.items()},
            {k: p(v) for k, v in self.left_choice.items()},
            {k: p(v) for k, v in self.right_choice.items()},
            p(self.left_plus),
            p(self.right_plus),
        )


def _atom_label(lam: str, x: str, y: str, sx: int, sy: int, with_lambda: bool) -> str:
    core = f"{x}{y}{SIGN[sx]}{SIGN[sy]}"
    return f"{lam}|{core}" if with_lambda else core


def to_big_space(model: HVModel, choice_priors=None, *, keep_null: bool = True) -> BigSpaceModel:
    """Product construction: rho(lam) p(x) p(y) P(X, Y | lam, x, y).

    Choice events are independent of the hidden state by construction.
    Labels read like ``a1b2+-`` (prefixed by ``lam|`` when there are several
    states).
    """
    nl, nr = model.joint.shape[1:3]
    if choice_priors is None:
        pl, pr = np.full(nl, 1 / nl), np.full(nr, 1 / nr)
    else:
        pl, pr = (np.asarray(p, dtype=np.float64) for p in choice_priors)
    if np.any(pl <= 0) or np.any(pr <= 0):
        raise PreconditionError("choice priors must be positive")
    if abs(pl.sum() - 1) > KERNEL_TOL or abs(pr.sum() - 1) > KERNEL_TOL:
        raise PreconditionError("choice priors must sum to 1")
    with_lam = model.n_lambda > 1
    atoms = []
    lam_ev: dict[str, set] = {l: set() for l in model.lambda_labels}
    lch: dict[str, set] = {x: set() for x in model.left_labels}
    rch: dict[str, set] = {y: set() for y in model.right_labels}
    lplus, rplus = set(), set()
    for l, lam in enumerate(model.lambda_labels):
        for i, x in enumerate(model.left_labels):
            for j, y in enumerate(model.right_labels):
                for sx in range(2):
                    for sy in range(2):
                        w = model.rho[l] * pl[i] * pr[j] * model.joint[l, i, j, sx, sy]
                        if not keep_null and w == 0:
                            continue
                        lab = _atom_label(lam, x, y, sx, sy, with_lam)
                        atoms.append((lab, float(w)))
                        lam_ev[lam].add(lab)
                        lch[x].add(lab)
                        rch[y].add(lab)
                        if sx == 0:
                            lplus.add(lab)
                        if sy == 0:
                            rplus.add(lab)
    space = ProbabilitySpace(atoms)
    return BigSpaceModel(
        space,
        {k: Event(frozenset(v), k) for k, v in lam_ev.items()},
        {k: Event(frozenset(v), k) for k, v in lch.items()},
        {k: Event(frozenset(v), k) for k, v in rch.items()},
        Event(frozenset(lplus), "X=+"),
        Event(frozenset(rplus), "Y=+"),
    )


def big_space_joint(big: BigSpaceModel, x: str, y: str) -> np.ndarray:
    """Marginal P(X, Y | x, y) recovered from the big space."""
    s = big.space
    block = big.left_choice[x] & big.right_choice[y]
    out = np.zeros((2, 2))
    for sx, ex in enumerate((big.left_plus, s.complement(big.left_plus))):
        for sy, ey in enumerate((big.right_plus, s.complement(big.right_plus))):
            out[sx, sy] = float(cond_prob(s, ex & ey, block))
    return out


def check_coarse_locality(
    big: BigSpaceModel,
    partitions: Mapping[tuple[str, str], Partition],
    which: str = "FACT",
    tol: float = DEFAULT_TOL,
) -> CheckReport:
    """Coarse-grained PI, OI or factorizability over the cells of each ``partitions[(x, y)]``.

    PI:   P(X | c x) = P(X | c x y)  and  P(Y | c y) = P(Y | c x y)
    OI:   P(XY | c x y) = P(X | c x y) P(Y | c x y)
    FACT: both of the above on the same cells; the direct product identity
          P(XY | c x y) = P(X | c x) P(Y | c y) is recorded in ``details``.
    """
    which = which.upper()
    if which not in ("PI", "OI", "FACT"):
        raise ValueError("which must be PI, OI or FACT")
    s = big.space
    needed = [(x, y) for x in big.left_choice for y in big.right_choice]
    missing = [m for m in needed if m not in partitions]
    if missing:
        raise ArityError(f"no partition for setting pairs {missing}")
    xs = {0: big.left_plus, 1: s.complement(big.left_plus)}
    ys = {0: big.right_plus, 1: s.complement(big.right_plus)}
    items, skipped = [], []
    direct = []
    for (x, y) in needed:
        part = partitions[(x, y)].validate(s)
        cx, cy = big.left_choice[x], big.right_choice[y]
        for cell in part:
            cxy = cell & cx & cy
            tag = f"{x}{y}:{cell.describe()}"
            if s.prob(cxy) == 0:
                skipped.append(tag)
                continue
            if which in ("PI", "FACT"):
                for sx in range(2):
                    items.append(equality_item((tag, f"X{SIGN[sx]}", "PI-left"),
                                               cond_prob(s, xs[sx], cell & cx), cond_prob(s, xs[sx], cxy), tol))
                for sy in range(2):
                    items.append(equality_item((tag, f"Y{SIGN[sy]}", "PI-right"),
                                               cond_prob(s, ys[sy], cell & cy), cond_prob(s, ys[sy], cxy), tol))
            for sx in range(2):
                for sy in range(2):
                    pxy = cond_prob(s, xs[sx] & ys[sy], cxy)
                    if which in ("OI", "FACT"):
                        items.append(equality_item(
                            (tag, f"X{SIGN[sx]}Y{SIGN[sy]}", "OI"),
                            pxy, cond_prob(s, xs[sx], cxy) * cond_prob(s, ys[sy], cxy), tol,
                        ))
                    if which == "FACT":
                        direct.append(abs(float(pxy - cond_prob(s, xs[sx], cell & cx) * cond_prob(s, ys[sy], cell & cy))))
    details = {}
    if which == "FACT":
        details["direct_factorization_residual"] = max(direct, default=0.0)
    return build_report(f"coarse_{which}", items, tol, skipped=skipped, details=details)


# ---------------------------------------------------------------------------
# the many-cause model
# ---------------------------------------------------------------------------


PAIR_ORDER = (("a1", "b1"), ("a1", "b2"), ("a2", "b1"), ("a2", "b2"))
SZABO_ACCEPT = 1e-12


def _pair_name(x: str, y: str) -> str:
    return f"{x.upper()}{y.upper()}"


@dataclass(frozen=True, eq=False)
class SzaboModel:
    """Big space with one common-cause event per correlated outcome pair."""

    big: BigSpaceModel
    common_cause_events: Mapping[str, Event]
    base: BigSpaceModel | None = None
    splits: np.ndarray | None = None
    atoms_at_definition: Mapping[str, int] = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def space(self) -> ProbabilitySpace:
        return self.big.space

    def correlated_pairs(self) -> list[tuple[str, Event, Event]]:
        out = []
        for x, y in PAIR_ORDER:
            out.append((_pair_name(x, y), self.big.outcome("left", x), self.big.outcome("right", y)))
        return out


class _BaseClasses:
    """Indicator vectors over the 16 base atoms."""

    def __init__(self, base: BigSpaceModel):
        self.labels = list(base.space.labels)
        self.w = np.array([float(v) for v in base.space.weights])
        self.ind = lambda e: np.array([l in e.labels for l in self.labels], dtype=np.float64)
        self.choice = {k: self.ind(v) for k, v in {**base.left_choice, **base.right_choice}.items()}
        self.outcome = {
            x: self.ind(base.outcome("left", x)) for x in base.left_choice
        } | {y: self.ind(base.outcome("right", y)) for y in base.right_choice}
        self.xplus = self.ind(base.left_plus)
        self.yplus = self.ind(base.right_plus)


def _stage_residuals(s: np.ndarray, bc: _BaseClasses, x: str, y: str) -> np.ndarray:
    """Constraint residuals for the cause of pair (x+, y+) with split ``s``."""
    w = bc.w
    z = w * s
    nz = w - z
    pz, pn = z.sum(), nz.sum()
    ptot = w.sum()
    res = []
    # cause independent of each wing's choice
    for c in (bc.choice["a1"], bc.choice["b1"]):
        res.append((z * c).sum() * ptot - pz * (w * c).sum())
    X, Y = bc.outcome[x], bc.outcome[y]
    # unconditional screening by Z and not-Z
    for m, pm in ((z, pz), (nz, pn)):
        res.append((m * X * Y).sum() * pm - (m * X).sum() * (m * Y).sum())
    # screening within the setting block
    blk = bc.choice[x] * bc.choice[y]
    for m in (z, nz):
        mb = m * blk
        res.append((mb * bc.xplus * bc.yplus).sum() * mb.sum() - (mb * bc.xplus).sum() * (mb * bc.yplus).sum())
    return np.array(res)


def _solve_stage(bc: _BaseClasses, x: str, y: str, rng: np.random.Generator, attempts: int):
    best = (math.inf, None)
    for _ in range(attempts):
        s0 = rng.uniform(0.25, 0.75, size=len(bc.w))
        sol = least_squares(
            _stage_residuals, s0, args=(bc, x, y), bounds=(0.0, 1.0), xtol=1e-15, ftol=1e-15, gtol=1e-15,
            max_nfev=2000,
        )
        s = np.clip(sol.x, 0.0, 1.0)
        r = float(np.max(np.abs(_stage_residuals(s, bc, x, y))))
        pz = float((bc.w * s).sum())
        if r < best[0] and 0.05 <= pz <= 0.95:
            best = (r, s)
        if r <= SZABO_ACCEPT and 0.05 <= pz <= 0.95:
            return s, r
    raise NoSolutionError(f"no balanced common cause found for {_pair_name(x, y)}", best[0])


def build_szabo_model(
    target,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
    *,
    attempts: int = 20,
    check_multiplicity: bool = True,
) -> SzaboModel:
    """Four successive doublings, each adding the cause of one outcome pair.

    ``target`` is an :class:`HVModel` or (2, 2, 2, 2) array of no-signalling
    joints, e.g. singlet joints.  The split of every atom at each stage is
    constant on the 16 base classes; it is found by bounded least squares from
    seeded random starts and then re-verified on the 256-atom space.
    """
    if isinstance(target, HVModel):
        joints = observable_joints(target)[:2, :2]
    else:
        joints = np.asarray(target, dtype=np.float64)
    if joints.shape != (2, 2, 2, 2):
        raise ArityError("target joints must be (2, 2, 2, 2)")
    one = HVModel.from_joint(np.ones(1), joints[None], lambda_labels=("o",))
    pi = check_parameter_independence(one, 1e-12)
    if not pi.holds:
        raise PreconditionError("target joints signal; no-signalling is required")
    base = to_big_space(one)
    bc = _BaseClasses(base)
    rng = np.random.Generator(np.random.Philox(seed))
    splits, stage_res = [], {}
    for x, y in PAIR_ORDER:
        s, r = _solve_stage(bc, x, y, rng, attempts)
        splits.append(s)
        stage_res[_pair_name(x, y)] = r
    splits = np.array(splits)

    # assemble the 256-atom space: label = base label + "#k" per stage
    atoms, amap = [], {}
    for i, lab in enumerate(bc.labels):
        images = []
        for copies in itertools.product((1, 2), repeat=4):
            w = bc.w[i]
            for k, c in enumerate(copies):
                w *= splits[k, i] if c == 1 else 1 - splits[k, i]
            name = lab + "".join(f"#{c}" for c in copies)
            atoms.append((name, float(w)))
            images.append(name)
        amap[lab] = frozenset(images)
    space = ProbabilitySpace(atoms)
    big = base.push(amap, space)
    causes, at_def = {}, {}
    for k, (x, y) in enumerate(PAIR_ORDER):
        name = _pair_name(x, y)
        causes[name] = Event(frozenset(a for a, _ in atoms if a.split("#")[1 + k] == "1"), f"Z_{name}")
        at_def[name] = len(bc.labels) * 2**k
    details = {"stage_residuals": stage_res, "seed": seed}
    if check_multiplicity:
        rng2 = np.random.Generator(np.random.Philox(seed + 1))
        other = np.array([_solve_stage(bc, x, y, rng2, attempts)[0] for x, y in PAIR_ORDER])
        diff = float(np.max(np.abs(other - splits)))
        details["alternative_seed_max_split_difference"] = diff
        details["multiple_solutions_detected"] = diff > 1e-6
    model = SzaboModel(big, causes, base, splits, at_def, details)
    ver = verify_szabo_model(model, tol)
    model.details["verification"] = {k: v.max_residual for k, v in ver.items()}
    failed = [k for k, v in ver.items() if not v.holds]
    if failed:
        worst = max(ver[k].max_residual for k in failed)
        raise NoSolutionError(f"assembled model fails {failed}", worst)
    return model


def verify_szabo_model(sz: SzaboModel, tol: float = DEFAULT_TOL) -> dict[str, CheckReport]:
    """Re-check every defining requirement on the assembled space."""
    big, s = sz.big, sz.space
    lc, rc = big.left_choice, big.right_choice
    items = {"choice_independence": [], "no_distant_setting": [], "cause_choice_independence": [],
             "cause_screening": [], "cause_block_screening": []}
    for x in lc:
        for y in rc:
            items["choice_independence"].append(
                equality_item((x, y), s.prob(lc[x] & rc[y]), s.prob(lc[x]) * s.prob(rc[y]), tol))
    for x in lc:
        X = big.outcome("left", x)
        for y in rc:
            items["no_distant_setting"].append(equality_item((X.name, y), s.prob(X & rc[y]), s.prob(X) * s.prob(rc[y]), tol))
    for y in rc:
        Y = big.outcome("right", y)
        for x in lc:
            items["no_distant_setting"].append(equality_item((Y.name, x), s.prob(Y & lc[x]), s.prob(Y) * s.prob(lc[x]), tol))
    for (name, X, Y), (x, y) in zip(sz.correlated_pairs(), PAIR_ORDER):
        z = sz.common_cause_events[name]
        nz = s.complement(z)
        for ch in list(lc.values()) + list(rc.values()):
            items["cause_choice_independence"].append(
                equality_item((z.name, ch.name), s.prob(z & ch), s.prob(z) * s.prob(ch), tol))
        for c in (z, nz):
            items["cause_screening"].append(equality_item(
                (c.describe(), X.name, Y.name), cond_prob(s, X & Y, c), cond_prob(s, X, c) * cond_prob(s, Y, c), tol))
            blk = c & lc[x] & rc[y]
            xp, yp = big.left_plus, big.right_plus
            items["cause_block_screening"].append(equality_item(
                (c.describe(), x + y), cond_prob(s, xp & yp, blk), cond_prob(s, xp, blk) * cond_prob(s, yp, blk), tol))
    return {k: build_report(k, v, tol) for k, v in items.items()}


def szabo_partitions(sz: SzaboModel) -> dict[tuple[str, str], Partition]:
    """The {Z, not Z} partition for each setting pair."""
    return {(x, y): Partition.binary(sz.space, sz.common_cause_events[_pair_name(x, y)]) for x, y in PAIR_ORDER}


def szabo_family(sz: SzaboModel):
    from .common_cause import CorrelationFamily

    return CorrelationFamily(sz.space, [(X, Y) for _, X, Y in sz.correlated_pairs()])


def strong_pcc_candidates(sz: SzaboModel) -> list[tuple[str, Partition]]:
    """Partitions built from the four causes: their full refinement, every
    sign-pattern cell against its complement, and each cause alone."""
    s = sz.space
    zs = list(sz.common_cause_events.values())
    out = [("refinement", Partition.refinement(s, zs))]
    for signs in itertools.product((True, False), repeat=len(zs)):
        cell = s.whole()
        for z, keep in zip(zs, signs):
            cell = cell & (z if keep else s.complement(z))
        pattern = "".join("+" if k else "-" for k in signs)
        if 0 < len(cell.labels) < len(s):
            out.append((f"cell {pattern}", Partition.binary(s, Event(cell.labels, pattern))))
    for name, z in sz.common_cause_events.items():
        out.append((f"Z_{name}", Partition.binary(s, z)))
    return out


def audit_boolean_combinations(sz: SzaboModel, tol: float = DEFAULT_TOL) -> CheckReport:
    """Correlation of intersections and unions of causes with every choice.

    Single causes are reported in ``details``; the verdict covers only the
    combinations, so an uncorrelated audit means no combination leaks choice
    information.
    """
    s = sz.space
    choices = {**sz.big.left_choice, **sz.big.right_choice}
    items, singles = [], {}
    names = list(sz.common_cause_events)
    for n in names:
        z = sz.common_cause_events[n]
        singles[n] = max(abs(float(correlation(s, z, c))) for c in choices.values())
    for a, b in itertools.combinations(names, 2):
        za, zb = sz.common_cause_events[a], sz.common_cause_events[b]
        for op, ev in (("and", za & zb), ("or", za | zb)):
            for cname, c in choices.items():
                corr = correlation(s, ev, c)
                items.append(equality_item((f"Z_{a} {op} Z_{b}", cname), s.prob(ev & c), s.prob(ev) * s.prob(c), tol,
                                           note=f"corr={float(corr):.3g}"))
    rep = build_report("boolean_combination_audit", items, tol, details={
        "single_cause_max_abs_correlation": singles,
    })
    rep.details["max_abs_correlation"] = rep.max_residual
    return rep


def common_common_cause_model(model: HVModel, choice_priors=None) -> SzaboModel:
    """A factorizable model read as a cause family: each state is a cause event."""
    big = to_big_space(model, choice_priors)
    causes = {name: Event(ev.labels, f"Z_{name}") for name, ev in big.lambda_events.items()}
    return SzaboModel(big, causes)


# ---------------------------------------------------------------------------
# lattice embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BellLattice:
    """A two-setting model written into 4x6 lattice worlds.

    Hidden state bits sit at (0,2) and (0,3), settings at (2,0) and (2,5)
    (bit 1 selects the second setting) and outcomes at (3,0) and (3,5)
    (bit 1 means +1).  Every other point is 0.
    """

    ensemble: object
    lambda_points: tuple = ((0, 2), (0, 3))
    left_setting: tuple = (2, 0)
    right_setting: tuple = (2, 5)
    left_outcome: tuple = (3, 0)
    right_outcome: tuple = (3, 5)

    def outcome_event(self, wing: str, plus: bool = True):
        from .spacetime_sel import LocalEvent

        p = self.left_outcome if wing == "left" else self.right_outcome
        return LocalEvent.point_is(p, 1 if plus else 0, name=f"{wing}{'+' if plus else '-'}")

    def setting_event(self, wing: str, index: int):
        from .spacetime_sel import LocalEvent

        p = self.left_setting if wing == "left" else self.right_setting
        return LocalEvent.point_is(p, index, name=f"{wing}-setting-{index + 1}")

    def right_setting_and_outcome(self, index: int = 0, plus: bool = True):
        """F for the table-mountain check: right setting ``index`` and outcome."""
        from .spacetime_sel import LocalEvent

        return LocalEvent.from_patterns(
            [self.right_setting, self.right_outcome], [(index, 1 if plus else 0)], name="right-setting&outcome"
        )

    def table_mountain_surface(self):
        """Surface with the left outcome above it and the whole right wing below."""
        from .spacetime_sel import Hypersurface

        return Hypersurface((2, 2, 2, 3, 3, 3))

    def early_surface(self):
        from .spacetime_sel import Hypersurface

        return Hypersurface((1,) * 6)


def embed_in_lattice(model: HVModel, choice_priors=None) -> BellLattice:
    from .spacetime_sel import LatticeSpacetime, WorldEnsemble

    if model.n_lambda > 4:
        raise ArityError("at most four hidden states fit in the lattice embedding")
    if model.joint.shape[1:3] != (2, 2):
        raise ArityError("lattice embedding needs two settings per wing")
    pl, pr = (np.full(2, 0.5), np.full(2, 0.5)) if choice_priors is None else map(np.asarray, choice_priors)
    lat = LatticeSpacetime(4, 6)
    emb = BellLattice(None)
    rows, weights = [], []
    for l in range(model.n_lambda):
        for i in range(2):
            for j in range(2):
                for sx in range(2):
                    for sy in range(2):
                        w = model.rho[l] * pl[i] * pr[j] * model.joint[l, i, j, sx, sy]
                        if w <= 0:
                            continue
                        g = np.zeros((4, 6), dtype=np.uint8)
                        g[emb.lambda_points[0]] = l & 1
                        g[emb.lambda_points[1]] = (l >> 1) & 1
                        g[emb.left_setting] = i
                        g[emb.right_setting] = j
                        g[emb.left_outcome] = 1 - sx
                        g[emb.right_outcome] = 1 - sy
                        rows.append(g.reshape(-1))
                        weights.append(float(w))
    weights = np.array(weights)
    weights = list(weights / weights.sum())
    ens = WorldEnsemble(lat, np.array(rows), weights)
    return BellLattice(ens)
