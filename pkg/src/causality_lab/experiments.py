"""Named experiments: each turns a parameter block into verdicts with expectations.

Every experiment returns an :class:`Outcome` holding a list of
:class:`CheckResult` (a report plus whether it is expected to hold or fail),
a dict of scalar values and optional text artifacts.  Randomness comes only
from the ``seed`` argument, so results are reproducible.
"""

from __future__ import annotations

import json
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np

from . import bell_lab as bl
from . import causet_growth as cg
from . import common_cause as cc
from . import spacetime_sel as ss
from .errors import ConfigError, InvalidGeometryError, PreconditionError
from .prob_core import (
    DEFAULT_TOL,
    CheckReport,
    Event,
    Partition,
    ProbabilitySpace,
    build_report,
    correlation,
    equality_item,
    reichenbach_check,
    strict_item,
)

EXPECTED = ("holds", "fails")


@dataclass
class CheckResult:
    name: str
    report: CheckReport
    expected: str = "holds"

    @property
    def ok(self) -> bool:
        return self.report.holds == (self.expected == "holds")

    def to_json_obj(self) -> dict:
        return {"name": self.name, "expected": self.expected, "ok": self.ok, "report": self.report.to_json_obj()}


@dataclass
class Outcome:
    checks: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)

    def add(self, name: str, report: CheckReport, expected: str = "holds") -> None:
        self.checks.append(CheckResult(name, report, expected))


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def worker_count() -> int:
    """Size of the worker pool, capped by ``CAUSALITY_LAB_THREADS``."""
    default = min(4, os.cpu_count() or 1)
    raw = os.environ.get("CAUSALITY_LAB_THREADS")
    if raw is None:
        return default
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ConfigError(f"CAUSALITY_LAB_THREADS must be an integer, got {raw!r}", "CAUSALITY_LAB_THREADS") from exc
    return max(1, min(default, cap))


def pool_map(fn: Callable, items) -> list:
    """Ordered map over a bounded thread pool."""
    items = list(items)
    n = worker_count()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def child_seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


def philox(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


_PI_ANGLE = re.compile(r"(-?)(\d*\.?\d*)pi(?:/(\d*\.?\d+))?")


def parse_angle(text) -> float:
    """Float from ``0.5``, ``pi/2``, ``3pi/4``, ``3*pi/4`` or ``-pi``."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower().replace(" ", "").replace("*", "")
    try:
        return float(s)
    except ValueError:
        pass
    m = _PI_ANGLE.fullmatch(s)
    if not m:
        raise ConfigError(f"cannot parse angle {text!r}", "angles")
    value = (float(m.group(2)) if m.group(2) else 1.0) * math.pi
    if m.group(3):
        value /= float(m.group(3))
    return -value if m.group(1) else value


def parse_angles(values) -> list[float]:
    if isinstance(values, str):
        values = values.split(",")
    out = [parse_angle(v) for v in values]
    if len(out) != 4:
        raise ConfigError("angles need four values a1,a2,b1,b2", "angles")
    return out


def _scalar_report(condition: str, lhs, rhs, tol, note: str = "") -> CheckReport:
    return build_report(condition, [equality_item((condition,), lhs, rhs, tol, note=note)], tol)


def _at_most_report(condition: str, values, bound, tol, labels=None) -> CheckReport:
    """Holds iff every value is at most ``bound`` (residual = excess)."""
    items = []
    for i, v in enumerate(values):
        excess = max(0.0, float(v) - float(bound))
        label = labels[i] if labels else f"#{i}"
        from .prob_core import _Item

        items.append(_Item((label,), float(v), float(bound), excess, excess <= tol))
    return build_report(condition, items, tol)


def _combine(condition: str, reports, tol, labels) -> CheckReport:
    """One verdict from many: each sub-report contributes its max residual."""
    from .prob_core import _Item

    items = [_Item((lab,), r.max_residual, 0.0, r.max_residual, r.holds) for lab, r in zip(labels, reports)]
    return build_report(condition, items, tol)


def _flag_report(condition: str, bad: list[str], total: int) -> CheckReport:
    """Holds iff ``bad`` is empty; each entry becomes a unit-residual witness."""
    from .prob_core import _Item

    items = [_Item((b,), 1.0, 0.0, 1.0, False) for b in bad]
    rep = build_report(condition, items, 0.0, details={"instances": total, "counterexamples": len(bad)})
    return rep


# ---------------------------------------------------------------------------
# bell
# ---------------------------------------------------------------------------


def _model_from_params(params: Mapping) -> bl.HVModel:
    model = params.get("model", "singlet")
    if isinstance(model, Mapping):
        return bl.HVModel.from_json_obj(model)
    if model == "singlet":
        return bl.singlet_oracle(bl.SettingsGeometry.from_angles(*parse_angles(params.get("angles", _OPT))))
    if isinstance(model, str) and model.endswith(".json"):
        with open(model) as fh:
            return bl.HVModel.from_json_obj(json.load(fh))
    raise ConfigError(f"unknown model {model!r}", "params.model")


_OPT = ["0", "pi/2", "pi/4", "3pi/4"]


def bell_chsh(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    model = _model_from_params(params)
    s = bl.chsh_value(model)
    out.values["chsh"] = s
    out.values["abs_chsh"] = abs(s)
    if "target" in params:
        target = 2 * math.sqrt(2) if params["target"] == "tsirelson" else float(params["target"])
        out.add("abs_chsh_equals_target", _scalar_report("abs_chsh", abs(s), target, float(params.get("target_tol", 1e-6))))
    if params.get("model", "singlet") == "singlet":
        a = parse_angles(params.get("angles", _OPT))
        par = bl.singlet_oracle(bl.SettingsGeometry.from_angles(a[0], a[1], a[0], a[1]))
        joints = [bl.observable_joint(par, x, y)[0, 0] for x, y in (("a1", "b1"), ("a2", "b2"))]
        out.values["parallel_pp"] = [float(j) for j in joints]
        out.add("parallel_pp_zero", build_report(
            "parallel_pp_zero", [equality_item((f"setting{i + 1}",), j, 0.0, 0.0) for i, j in enumerate(joints)], 0.0))
    return out


def bell_local_bound(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    n = int(params.get("n_models", 10_000))
    n_lambda = int(params.get("n_lambda", 3))
    rng = philox(seed)
    models = [bl.random_factorizable_model(rng, n_lambda) for _ in range(n)]
    fact = [bl.check_factorizability(m, tol) for m in models]
    joints = np.array([bl.observable_joints(m)[:2, :2] for m in models])
    values = bl.chsh_batch(joints)
    factorizable_values = [abs(v) for v, f in zip(values, fact) if f.holds]
    out.values["n_models"] = n
    out.values["n_factorizable"] = len(factorizable_values)
    out.values["max_abs_chsh"] = float(np.max(np.abs(values)))
    out.add("random_models_factorizable", _combine("factorizable", fact, tol, [f"model{i}" for i in range(n)]))
    out.add("factorizable_chsh_at_most_2", _at_most_report("local_chsh_bound", factorizable_values, 2.0, tol))
    verts = bl.deterministic_vertices()
    vvals = [abs(bl.chsh_value(v)) for v in verts]
    out.values["vertex_abs_chsh"] = vvals
    out.add("vertices_chsh_at_most_2", _at_most_report("vertex_chsh_bound", vvals, 2.0, 0.0))
    out.add("vertices_reach_2", _scalar_report("vertex_chsh_max", max(vvals), 2.0, 0.0))
    return out


def bell_pi_oi(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    geoms = params.get("angle_sets", [_OPT, ["0", "pi/3", "pi/6", "pi/2"], ["0.3", "1.1", "0.7", "2.0"]])
    for k, angles in enumerate(geoms):
        m = bl.singlet_oracle(bl.SettingsGeometry.from_angles(*parse_angles(angles)))
        out.add(f"pi_geometry{k}", bl.check_parameter_independence(m, tol), "holds")
        out.add(f"oi_geometry{k}", bl.check_outcome_independence(m, tol), "fails")
    return out


def bell_audit(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    model = _model_from_params(params)
    out.add("parameter_independence", bl.check_parameter_independence(model, tol))
    out.add("outcome_independence", bl.check_outcome_independence(model, tol))
    out.add("factorizability", bl.check_factorizability(model, tol))
    if model.joint.shape[1:3] == (2, 2):
        s = bl.chsh_value(model)
        out.values["chsh"] = s
        out.add("chsh_at_most_2", _at_most_report("chsh_bound", [abs(s)], 2.0, tol))
    shared = [x for x in model.left_labels if x in model.right_labels]
    if len(shared) >= 3:
        out.add("bell_wigner", bl.bell_wigner_check(model, shared[:3], tol))
    return out


# ---------------------------------------------------------------------------
# szabo
# ---------------------------------------------------------------------------


def szabo_build(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    angles = parse_angles(params.get("angles", _OPT))
    target = bl.singlet_oracle(bl.SettingsGeometry.from_angles(*angles))
    sz = bl.build_szabo_model(target, tol, seed, attempts=int(params.get("attempts", 20)))
    s = sz.space
    out.values["atoms"] = len(s)
    out.values["cause_atoms_at_definition"] = dict(sz.atoms_at_definition)
    out.values["cause_atoms_final"] = {k: len(z.labels) for k, z in sz.common_cause_events.items()}
    out.values["multiple_solutions_detected"] = bool(sz.details.get("multiple_solutions_detected"))
    out.add("atom_count_256", _scalar_report("atom_count", len(s), 256, 0))
    sizes = list(sz.atoms_at_definition.values())
    out.add("cause_sizes_16_32_64_128", build_report(
        "cause_sizes", [equality_item((k,), v, w, 0) for (k, v), w in zip(sz.atoms_at_definition.items(), (16, 32, 64, 128))], 0))
    for name, rep in bl.verify_szabo_model(sz, tol).items():
        out.add(name, rep)
    fam = bl.szabo_family(sz)
    parts = bl.szabo_partitions(sz)
    out.add("weak_pcc", cc.weak_pcc_check(fam, [parts[p] for p in bl.PAIR_ORDER], tol))
    for label, part in bl.strong_pcc_candidates(sz):
        out.add(f"strong_pcc[{label}]", cc.strong_pcc_check(fam, part, tol), "fails")
    out.add("boolean_combination_audit", bl.audit_boolean_combinations(sz, tol), "fails")
    out.add("coarse_oi_cause_partitions", bl.check_coarse_locality(sz.big, parts, "OI", tol))
    lam = {p: sz.big.lambda_partition() for p in bl.PAIR_ORDER}
    out.add("coarse_oi_state_partition", bl.check_coarse_locality(sz.big, lam, "OI", tol), "fails")
    out.values["audit_max_abs_correlation"] = out.checks[-3].report.max_residual
    out.artifacts["szabo.json"] = json.dumps({
        "space": s.to_json_obj(),
        "causes": {k: sorted(z.labels) for k, z in sz.common_cause_events.items()},
        "splits": np.asarray(sz.splits).tolist(),
    }, sort_keys=True)
    return out


# ---------------------------------------------------------------------------
# pcc
# ---------------------------------------------------------------------------


def _space_from_params(params: Mapping) -> ProbabilitySpace:
    spec = params.get("space")
    if spec is None:
        raise ConfigError("missing probability space", "params.space")
    if isinstance(spec, str):
        with open(spec) as fh:
            spec = json.load(fh)
    try:
        return ProbabilitySpace.from_json_obj(spec)
    except Exception as exc:  # surface as a config problem
        raise ConfigError(f"invalid space: {exc}", "params.space") from exc


def _pairs_from_params(space: ProbabilitySpace, params: Mapping) -> list[tuple[Event, Event]]:
    pairs = params.get("pairs")
    if isinstance(pairs, str):
        with open(pairs) as fh:
            pairs = json.load(fh)
    if not pairs:
        raise ConfigError("at least one event pair is required", "params.pairs")
    out = []
    for k, (e, f) in enumerate(pairs):
        out.append((space.event(e, name=f"E{k}"), space.event(f, name=f"F{k}")))
    return out


def pcc_extend(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    space = _space_from_params(params)
    pairs = _pairs_from_params(space, params)
    fam = cc.CorrelationFamily(space, pairs)
    target, causes, emb = cc.iterate_extensions(fam, tol, return_embedding=True)
    out.add("measure_preserved", emb.verify(0.0 if space.exact else 1e-12))
    for k, ((e, f), c) in enumerate(zip(pairs, causes)):
        out.add(f"reichenbach_pair{k}", reichenbach_check(target, c, emb.push(e), emb.push(f), tol, signed=True))
    out.values["atoms"] = len(target)
    out.artifacts["extension.json"] = json.dumps({
        "space": target.to_json_obj(),
        "atom_map": emb.to_json_obj(),
        "causes": [sorted(c.labels) for c in causes],
    }, sort_keys=True)
    return out


def pcc_check(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    space = _space_from_params(params)
    fam = cc.CorrelationFamily(space, _pairs_from_params(space, params))
    raw = params.get("partitions")
    if not raw:
        raise ConfigError("partitions are required", "params.partitions")
    parts = [Partition([space.event(c) for c in cells]) for cells in raw]
    mode = params.get("mode", "weak")
    if mode == "weak":
        out.add("weak_pcc", cc.weak_pcc_check(fam, parts, tol))
    elif mode == "strong":
        if len(parts) != 1:
            raise ConfigError("strong mode takes exactly one partition", "params.partitions")
        out.add("strong_pcc", cc.strong_pcc_check(fam, parts[0], tol))
    else:
        raise ConfigError(f"mode must be weak or strong, got {mode!r}", "params.mode")
    return out


def _random_rational_space(rng: np.random.Generator, n_atoms: int) -> ProbabilitySpace:
    w = rng.integers(1, 10, size=n_atoms)
    tot = int(w.sum())
    return ProbabilitySpace([(f"w{i}", Fraction(int(v), tot)) for i, v in enumerate(w)])


def _random_correlated_pair(rng: np.random.Generator):
    while True:
        space = _random_rational_space(rng, int(rng.integers(4, 9)))
        labels = space.labels
        e = space.event([l for l in labels if rng.random() < 0.5])
        f = space.event([l for l in labels if rng.random() < 0.5])
        if 0 < space.prob(e) < 1 and 0 < space.prob(f) < 1 and correlation(space, e, f) != 0:
            return space, e, f


def _extension_trial(seed_seq) -> tuple[CheckReport, CheckReport, bool]:
    rng = philox(seed_seq)
    space, e, f = _random_correlated_pair(rng)
    target, emb, c = cc.extend_with_common_cause(space, e, f)
    flip = correlation(space, e, f) < 0
    f_eff = space.complement(f) if flip else f
    rep = reichenbach_check(target, c, emb.push(e), emb.push(f_eff), 0.0)
    return rep, emb.verify(0.0), target.exact


def _reichenbach_triple(rng: np.random.Generator) -> tuple[ProbabilitySpace, Event, Event, Event]:
    """Random triple built to satisfy all four conditions, with atoms further split."""
    def frac(lo=1, hi=11, d=12):
        return Fraction(int(rng.integers(lo, hi + 1)), d)

    g = frac(1, 11)
    e1, e0 = sorted(rng.choice(np.arange(0, 13), size=2, replace=False))[::-1]
    f1, f0 = sorted(rng.choice(np.arange(0, 13), size=2, replace=False))[::-1]
    pe = {1: Fraction(int(e1), 12), 0: Fraction(int(e0), 12)}
    pf = {1: Fraction(int(f1), 12), 0: Fraction(int(f0), 12)}
    atoms = []
    for c in (1, 0):
        pc = g if c else 1 - g
        for ev in (1, 0):
            for fv in (1, 0):
                w = pc * (pe[c] if ev else 1 - pe[c]) * (pf[c] if fv else 1 - pf[c])
                cut = Fraction(int(rng.integers(1, 4)), 4)
                atoms.append((f"c{c}e{ev}f{fv}a", w * cut))
                atoms.append((f"c{c}e{ev}f{fv}b", w * (1 - cut)))
    space = ProbabilitySpace(atoms)
    pick = lambda key: space.where(lambda l: l[key] == "1")
    return space, pick(1), pick(3), pick(5)


def pcc_suite(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    n_pairs = int(params.get("n_pairs", 100))
    trials = int(params.get("trials", 10_000))
    seeds = child_seeds(seed, 2)
    results = pool_map(_extension_trial, seeds[0].spawn(n_pairs))
    labels = [f"pair{i}" for i in range(n_pairs)]
    out.add("extensions_reichenbach", _combine("extension_reichenbach", [r[0] for r in results], 0.0, labels))
    out.add("extensions_measure_exact", _combine("measure_preservation", [r[1] for r in results], 0.0, labels))
    out.add("extensions_rational", _flag_report("rational_extension", [l for l, r in zip(labels, results) if not r[2]], n_pairs))

    rng = philox(seeds[1])
    invalid, items = [], []
    for i in range(trials):
        space, c, e, f = _reichenbach_triple(rng)
        if not reichenbach_check(space, c, e, f, 0.0).holds:
            invalid.append(f"triple{i}")
            continue
        items.append(strict_item((f"triple{i}",), correlation(space, e, f), 0, 0.0))
    out.add("sampled_triples_reichenbach_valid", _flag_report("valid_triples", invalid, trials))
    out.add("positive_correlation_theorem", build_report("positive_correlation", items, 0.0))
    out.values["n_pairs"] = n_pairs
    out.values["trials"] = trials
    return out


# ---------------------------------------------------------------------------
# sel
# ---------------------------------------------------------------------------


def _lattice(params: Mapping) -> ss.LatticeSpacetime:
    lat = params.get("lattice", [4, 6])
    try:
        return ss.LatticeSpacetime(int(lat[0]), int(lat[1]))
    except Exception as exc:
        raise ConfigError(f"invalid lattice {lat!r}: {exc}", "params.lattice") from exc


def ensemble_from_spec(spec: Mapping, lat: ss.LatticeSpacetime | None, seed: int):
    """Build an ensemble (and the Bell embedding, when used) from a JSON block."""
    gen = spec.get("generator")
    pts = lambda v: None if v is None else [tuple(p) for p in v]
    if gen == "product":
        return ss.product_ensemble(lat, spec.get("p", "1/2"), free=pts(spec.get("free"))), None
    if gen == "ca":
        return ss.local_ca_ensemble(lat, spec.get("initial_p", "1/2"), spec["rule"], rows=spec.get("rows")), None
    if gen == "random":
        return ss.random_sparse_ensemble(lat, int(spec.get("n_worlds", 64)), seed, free=pts(spec.get("free"))), None
    if gen == "mixture":
        comps = [ensemble_from_spec(c, lat, seed)[0] for c in spec["components"]]
        return ss.mixture(comps, spec["weights"]), None
    if gen == "file":
        with open(spec["path"]) as fh:
            return ss.WorldEnsemble.from_json_obj(json.load(fh)), None
    if gen == "bell":
        model = _model_from_params(spec)
        if spec.get("model") == "factorizable":
            model = bl.random_factorizable_model(philox(seed), int(spec.get("n_lambda", 3)))
        emb = bl.embed_in_lattice(model)
        return emb.ensemble, emb
    raise ConfigError(f"unknown ensemble generator {gen!r}", "params.ensemble.generator")


def _event_from_spec(spec, emb) -> ss.LocalEvent | None:
    if spec is None:
        return None
    if isinstance(spec, str):
        if emb is None:
            raise ConfigError(f"named event {spec!r} needs a Bell ensemble", "params.checks.E")
        named = {
            "left+": lambda: emb.outcome_event("left", True),
            "left-": lambda: emb.outcome_event("left", False),
            "right+": lambda: emb.outcome_event("right", True),
            "right-": lambda: emb.outcome_event("right", False),
            "right-setting1&+": lambda: emb.right_setting_and_outcome(0, True),
            "right-setting2&+": lambda: emb.right_setting_and_outcome(1, True),
        }
        if spec not in named:
            raise ConfigError(f"unknown named event {spec!r}", "params.checks.E")
        return named[spec]()
    if "point" in spec:
        return ss.LocalEvent.point_is(tuple(spec["point"]), int(spec.get("value", 1)))
    return ss.LocalEvent.from_patterns([tuple(p) for p in spec["points"]], [tuple(p) for p in spec["patterns"]])


def _surface_from_spec(spec, emb, lat) -> ss.Hypersurface:
    if spec == "table_mountain" and emb is not None:
        return emb.table_mountain_surface()
    if spec == "early" and emb is not None:
        return emb.early_surface()
    if isinstance(spec, int):
        return ss.Hypersurface.flat(lat, spec)
    if isinstance(spec, (list, tuple)):
        return ss.Hypersurface(tuple(int(v) for v in spec))
    raise ConfigError(f"cannot read hypersurface {spec!r}", "params.checks.h")


def sel_check(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    spec = params.get("ensemble")
    if not isinstance(spec, Mapping):
        raise ConfigError("an ensemble block is required", "params.ensemble")
    lat = None if spec.get("generator") in ("bell", "file") else _lattice(params)
    ens, emb = ensemble_from_spec(spec, lat, seed)
    lat = ens.lattice
    out.values["n_worlds"] = ens.n_worlds
    for k, chk in enumerate(params.get("checks", [])):
        cond = chk.get("condition")
        name = chk.get("name", f"{cond}_{k}")
        e = _event_from_spec(chk.get("E"), emb)
        f = _event_from_spec(chk.get("F"), emb)
        h = _surface_from_spec(chk.get("h"), emb, lat)
        if cond == "SELS":
            rep = ss.check_SELS(ens, e, h, tol)
        elif cond == "SELD1":
            rep = ss.check_SELD1(ens, e, f, h, tol)
        elif cond == "SELD2":
            rep = ss.check_SELD2(ens, e, f, h, tol)
        elif cond == "ratio":
            rep = ss.check_ratio_assumption(ens, e, f, h, tol)
        else:
            raise ConfigError(f"unknown condition {cond!r}", f"params.checks[{k}].condition")
        out.add(name, rep, chk.get("expected", "holds"))
    return out


# -- random implication suite -------------------------------------------------

_RULE_VALUES = [Fraction(k, 4) for k in range(5)]
_CA_SHAPES = [((3, 4), None), ((4, 3), None), ((2, 6), None), ((4, 6), 2), ((4, 4), 3)]


def _random_rule(rng):
    return [_RULE_VALUES[int(rng.integers(0, 5))] for _ in range(8)]


def _suite_ensemble(rng: np.random.Generator, kind: int) -> ss.WorldEnsemble:
    if kind == 0:  # local dynamics: premises hold
        (t, x), rows = _CA_SHAPES[int(rng.integers(0, len(_CA_SHAPES)))]
        return ss.local_ca_ensemble(ss.LatticeSpacetime(t, x), _RULE_VALUES[int(rng.integers(1, 4))], _random_rule(rng), rows=rows)
    if kind == 1:  # sparse random worlds: premises mostly fail
        t, x = [(4, 6), (4, 4), (3, 5)][int(rng.integers(0, 3))]
        lat = ss.LatticeSpacetime(t, x)
        return ss.random_sparse_ensemble(lat, int(rng.integers(8, 513)), int(rng.integers(0, 2**63)))
    if kind == 2:  # hidden mixtures of local dynamics
        (t, x), rows = _CA_SHAPES[int(rng.integers(0, len(_CA_SHAPES)))]
        lat = ss.LatticeSpacetime(t, x)
        comps = [ss.local_ca_ensemble(lat, _RULE_VALUES[int(rng.integers(1, 4))], _random_rule(rng), rows=rows) for _ in range(2)]
        return ss.mixture(comps, [Fraction(1, 2), Fraction(1, 2)])
    lat = ss.LatticeSpacetime(4, 6)
    free = [p for p in lat.all_points() if rng.random() < 0.5][:12]
    probs = {p: _RULE_VALUES[int(rng.integers(1, 4))] for p in free}
    return ss.product_ensemble(lat, probs, free=free)


def _random_event(rng, lat: ss.LatticeSpacetime) -> ss.LocalEvent:
    t = int(rng.integers(1, lat.T))
    x = int(rng.integers(0, lat.X))
    if rng.random() < 0.6 or x + 1 >= lat.X:
        return ss.LocalEvent.point_is((t, x), int(rng.integers(0, 2)))
    pats = [p for p in ((0, 0), (0, 1), (1, 0), (1, 1)) if rng.random() < 0.5] or [(1, 1)]
    return ss.LocalEvent.from_patterns([(t, x), (t, x + 1)], pats)


def _random_surface(rng, lat: ss.LatticeSpacetime, e: ss.LocalEvent) -> ss.Hypersurface | None:
    for _ in range(60):
        h = [int(rng.integers(-1, lat.T))]
        for _x in range(1, lat.X):
            h.append(int(np.clip(h[-1] + rng.integers(-1, 2), -1, lat.T - 1)))
        hs = ss.Hypersurface(tuple(h))
        if ss.divides(hs, e.region):
            return hs
    return None


def _point_events(points, rng, k):
    idx = rng.permutation(len(points))[:k]
    return [ss.LocalEvent.point_is(points[i], int(rng.integers(0, 2))) for i in idx]


def _suite_unit(args) -> dict:
    """All implication instances on one random ensemble (exact arithmetic, tol 0)."""
    index, seed_seq, instances = args
    rng = philox(seed_seq)
    ens = _suite_ensemble(rng, index % 4)
    lat = ens.lattice
    res = {"seld1_all": True, "seld2_all": True, "imp1": [], "route": [], "imp2": [], "iff": [],
           "counts": {"seld1_holds": 0, "seld2_fails": 0, "premises2": 0, "sels_holds": 0, "sels_fails": 0}}
    for j in range(instances):
        tag = f"ens{index}.{j}"
        e = _random_event(rng, lat)
        h = _random_surface(rng, lat, e)
        if h is None:
            continue
        past_h = h.past(lat)
        cone_e = ss.causal_past(lat, e.region)
        # SELS versus SELD2 against the whole past
        sels = ss.check_SELS(ens, e, h, 0.0)
        seld2_all = ss.check_SELD2(ens, e, None, h, 0.0)
        res["counts"]["sels_holds" if sels.holds else "sels_fails"] += 1
        if sels.holds != seld2_all.holds:
            res["iff"].append(tag)
        # SELD1 at the table-mountain surface versus SELD2 at h
        tstar = ss.table_mountain_surface(lat, e.region, h)
        side = sorted((past_h - cone_e).points)
        for k, f in enumerate(_point_events(side, rng, 2)):
            r2 = ss.check_SELD2(ens, e, f, h, 0.0)
            r1 = ss.check_SELD1(ens, e, f, tstar, 0.0)
            res["seld1_all"] &= r1.holds
            res["seld2_all"] &= r2.holds
            res["counts"]["seld1_holds"] += r1.holds
            res["counts"]["seld2_fails"] += not r2.holds
            if r1.holds and not r2.holds:
                res["imp1"].append(f"{tag}.side{k}")
            if abs(r1.max_residual - r2.max_residual) > 1e-12 or r1.holds != r2.holds:
                res["route"].append(f"{tag}.side{k}")
        res["seld2_all"] &= seld2_all.holds
        # SELD2 + ratio => SELD1 on spacelike F above h
        future = [p for p in sorted(h.future(lat).points) if p not in e.region.points]
        for k, f in enumerate(_point_events(future, rng, 6)):
            try:
                r1 = ss.check_SELD1(ens, e, f, h, 0.0)
            except InvalidGeometryError:
                continue
            res["seld1_all"] &= r1.holds
            t2 = ss.concordance_surface(lat, e.region, f.region, h)
            premises = (
                ss.check_SELD2(ens, e, None, h, 0.0).holds
                and ss.check_SELD2(ens, f, None, h, 0.0).holds
                and ss.check_SELD2(ens, e, f, t2, 0.0).holds
                and ss.check_ratio_assumption(ens, e, f, h, 0.0).holds
            )
            res["counts"]["premises2"] += premises
            if premises and not r1.holds:
                res["imp2"].append(f"{tag}.up{k}")
            break
    res["exact"] = ens.exact
    res["n_worlds"] = ens.n_worlds
    res["lattice"] = (lat.T, lat.X)
    return res


def sel_suite(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    n = int(params.get("n_ensembles", 1000))
    instances = int(params.get("instances", 3))
    units = pool_map(_suite_unit, [(i, s, instances) for i, s in enumerate(child_seeds(seed, n))])
    imp1 = [x for u in units for x in u["imp1"]]
    route = [x for u in units for x in u["route"]]
    imp2 = [x for u in units for x in u["imp2"]]
    iff = [x for u in units for x in u["iff"]]
    ens_level = [f"ens{i}" for i, u in enumerate(units) if u["seld1_all"] and not u["seld2_all"]]
    counts: dict = {}
    for u in units:
        for k, v in u["counts"].items():
            counts[k] = counts.get(k, 0) + int(v)
    counts["ensembles"] = n
    counts["ensembles_seld1_all"] = sum(u["seld1_all"] for u in units)
    counts["ensembles_seld2_fail"] = sum(not u["seld2_all"] for u in units)
    counts["max_worlds"] = max(u["n_worlds"] for u in units)
    counts["max_lattice"] = [max(u["lattice"][0] for u in units), max(u["lattice"][1] for u in units)]
    counts["all_exact"] = all(u["exact"] for u in units)
    out.values.update(counts)
    total1 = counts["seld1_holds"] + counts["seld2_fails"]
    out.add("seld1_implies_seld2_instances", _flag_report("seld1_implies_seld2", imp1, total1))
    out.add("seld1_seld2_route_agreement", _flag_report("seld1_seld2_agreement", route, total1))
    out.add("seld1_implies_seld2_ensembles", _flag_report("seld1_implies_seld2_ensemble", ens_level, n))
    out.add("seld2_ratio_implies_seld1", _flag_report("seld2_ratio_implies_seld1", imp2, counts["premises2"]))
    out.add("sels_iff_seld2", _flag_report("sels_iff_seld2", iff, counts["sels_holds"] + counts["sels_fails"]))
    # constructed violations
    emb = bl.embed_in_lattice(bl.singlet_oracle(bl.SettingsGeometry.chsh_optimal()))
    e = emb.outcome_event("left")
    out.add("bell_embedded_seld2", ss.check_SELD2(emb.ensemble, e, emb.right_setting_and_outcome(0), emb.table_mountain_surface(), tol), "fails")
    out.add("bell_embedded_seld1", ss.check_SELD1(emb.ensemble, e, emb.outcome_event("right"), emb.early_surface(), tol), "fails")
    return out


# ---------------------------------------------------------------------------
# causets
# ---------------------------------------------------------------------------


def _parse_q(raw) -> tuple:
    if raw is None:
        raise ConfigError("q is required", "params.q")
    if isinstance(raw, str):
        raw = [v.strip() for v in raw.split(",") if v.strip()]
    try:
        return tuple(Fraction(str(v)) for v in raw)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot read q: {exc}", "params.q") from exc


def _dynamics(params: Mapping, rank: int) -> cg.GrowthDynamics:
    try:
        return cg.GrowthDynamics(_parse_q(params.get("q"))).extended_percolation(rank)
    except PreconditionError as exc:
        raise ConfigError(str(exc), "params.q") from exc


def causet_grow(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    steps = int(params.get("steps", 6))
    dyn = _dynamics(params, max(steps - 1, 0))
    c = cg.grow(dyn, steps, seed)
    out.values["q"] = dyn.to_json_obj()
    out.values["relation"] = c.to_json_obj()
    out.values["canonical_code"] = c.canonical_code()
    probs = [p for _, _, p in c.trajectory]
    out.add("trajectory_probabilities_positive", build_report(
        "trajectory_positive", [strict_item((f"stage{k}",), p, 0, 0.0) for k, p in enumerate(probs)], 0.0))
    out.artifacts["causet.json"] = json.dumps(c.to_json_obj())
    lines = ["stage,precursor_set,probability"]
    for stage, pre, p in c.trajectory:
        lines.append(f"{stage},\"{' '.join(map(str, pre))}\",{p}")
    out.artifacts["trajectory.csv"] = "\n".join(lines) + "\n"
    return out


def _verify_one(dyn: cg.GrowthDynamics, rank: int, sum_rank: int, tol: float, tag: str = "") -> list[tuple]:
    return [
        (f"{tag}inversion_identity", cg.check_inversion_identity(dyn, 0)),
        (f"{tag}markov_sum_rule", cg.check_markov_sum_rule(dyn, sum_rank, 0)),
        (f"{tag}dgc", cg.check_dgc(dyn, rank, tol)),
        (f"{tag}bell_causality", cg.check_bell_causality(dyn, rank, tol)),
    ]


def causet_verify(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    rank = int(params.get("max_rank", 5))
    sum_rank = int(params.get("sum_rule_rank", rank))
    ctol = float(params.get("tol", 1e-12))
    if params.get("q") is not None:
        dyn = _dynamics(params, max(rank, sum_rank))
        out.values["q"] = dyn.to_json_obj()
        for name, rep in _verify_one(dyn, rank, sum_rank, ctol):
            out.add(name, rep)
        if params.get("worked_examples", True):
            _worked_examples(out)
    n_random = int(params.get("n_random", 0))
    if n_random:
        rngs = [philox(s) for s in child_seeds(seed, n_random)]
        dyns = [cg.random_rational_dynamics(r, max(rank, sum_rank)) for r in rngs]
        groups = pool_map(lambda d: _verify_one(d, rank, sum_rank, ctol), dyns)
        by_kind: dict = {}
        for i, group in enumerate(groups):
            for name, rep in group:
                by_kind.setdefault(name, []).append((f"q{i}", rep))
        for name, pairs in by_kind.items():
            out.add(f"random_q_{name}", _combine(name, [r for _, r in pairs], ctol, [l for l, _ in pairs]))
        out.values["random_q"] = [d.to_json_obj() for d in dyns]
    return out


def _worked_examples(out: Outcome) -> None:
    dyn = cg.GrowthDynamics(("1", "1/2", "1/4"))
    chain2 = cg.Causet.chain(2)
    dist = cg.transition_distribution(chain2, dyn)
    want = {frozenset(): Fraction(1, 4), frozenset({0}): Fraction(1, 4), frozenset({0, 1}): Fraction(1, 2)}
    items = [equality_item((str(sorted(s)),), dist[s], v, 0) for s, v in want.items()]
    out.add("two_chain_transitions", build_report("two_chain_transitions", items, 0))
    items = [equality_item((f"n={n}",), cg.alpha(n, 0, 0, dyn), dyn.q[n], 0) for n in range(3)]
    out.add("empty_precursor_is_q_n", build_report("empty_precursor", items, 0))


def causet_strong_sel(params: Mapping, seed: int, tol: float) -> Outcome:
    out = Outcome()
    rank = int(params.get("max_rank", 3))
    grid = str(params.get("grid", "1/100"))
    try:
        grid = Fraction(grid)
    except ValueError as exc:
        raise ConfigError(f"bad grid {grid!r}", "params.grid") from exc
    search = cg.strong_sel_solutions(rank, grid)
    out.values["search"] = search.to_json_obj()
    kinds = sorted(search.solution_kinds)
    out.add("solutions_are_chain_and_antichain", build_report("strong_sel_solutions", [
        equality_item(("kinds",), 0 if kinds == ["antichain", "chain"] else 1, 0, 0),
    ], 0, details={"kinds": kinds}))
    for k, d in enumerate(search.solutions):
        out.add(f"solution{k}_{search.solution_kinds[k]}", cg.check_strong_sel(d, rank, 0))
    q = params.get("q", "1,1/2,1/4")
    dyn = _dynamics({"q": q}, rank)
    rep = cg.check_strong_sel(dyn, rank, 0)
    out.add("strong_sel_generic", rep, "fails")
    witness = rep.details.get("sum_rule_witness")
    out.add("sum_rule_witness_found", build_report("sum_rule_witness", [
        equality_item(("witness",), 0 if witness else 1, 0, 0)], 0, details={"witness": witness}))
    return out


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

REGISTRY: dict[tuple[str, str], Callable[[Mapping, int, float], Outcome]] = {
    ("bell", "chsh"): bell_chsh,
    ("bell", "local_bound"): bell_local_bound,
    ("bell", "pi_oi"): bell_pi_oi,
    ("bell", "audit"): bell_audit,
    ("szabo", "build"): szabo_build,
    ("pcc", "extend"): pcc_extend,
    ("pcc", "check"): pcc_check,
    ("pcc", "suite"): pcc_suite,
    ("sel", "check"): sel_check,
    ("sel", "suite"): sel_suite,
    ("causet", "grow"): causet_grow,
    ("causet", "verify"): causet_verify,
    ("causet", "strong_sel"): causet_strong_sel,
}
