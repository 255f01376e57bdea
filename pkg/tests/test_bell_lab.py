import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causality_lab.bell_lab import (
    HVModel,
    SettingsGeometry,
    audit_boolean_combinations,
    bell_wigner_check,
    big_space_joint,
    build_szabo_model,
    check_coarse_locality,
    check_factorizability,
    check_outcome_independence,
    check_parameter_independence,
    chsh_value,
    common_common_cause_model,
    determinize,
    deterministic_vertices,
    embed_in_lattice,
    observable_joint,
    random_factorizable_model,
    random_generic_model,
    random_no_signalling_model,
    singlet_oracle,
    strong_pcc_candidates,
    szabo_family,
    szabo_partitions,
    to_big_space,
    verify_szabo_model,
)
from causality_lab.common_cause import strong_pcc_check, weak_pcc_check
from causality_lab.errors import ArityError, ModelIncompleteError, PreconditionError
from causality_lab.prob_core import Partition, correlation


def analytic_singlet_chsh(a1, a2, b1, b2):
    e = lambda a, b: -math.cos(a - b)
    return e(a1, b1) - e(a1, b2) + e(a2, b1) + e(a2, b2)


class TestSinglet:
    def test_tsirelson(self):
        m = singlet_oracle(SettingsGeometry.chsh_optimal())
        s = chsh_value(m)
        assert abs(s) == pytest.approx(2 * math.sqrt(2), abs=1e-9)
        assert s == pytest.approx(analytic_singlet_chsh(0, math.pi / 2, math.pi / 4, 3 * math.pi / 4), abs=1e-12)

    @pytest.mark.parametrize("d,pp,pm", [(0.0, 0.0, 0.5), (math.pi, 0.5, 0.0), (math.pi / 2, 0.25, 0.25)])
    def test_joint_at_angle(self, d, pp, pm):
        j = observable_joint(singlet_oracle(SettingsGeometry((0.0,), (d,))), 0, 0)
        assert j[0, 0] == pytest.approx(pp, abs=1e-15)
        assert j[0, 1] == pytest.approx(pm, abs=1e-15)
        if d == 0.0:
            assert j[0, 0] == 0.0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-math.pi, math.pi), min_size=4, max_size=4))
    def test_chsh_matches_analytic(self, ang):
        m = singlet_oracle(SettingsGeometry.from_angles(*ang))
        assert chsh_value(m) == pytest.approx(analytic_singlet_chsh(*ang), abs=1e-12)

    def test_pi_holds_oi_fails(self):
        for a, b in [(0.0, math.pi / 4), (0.3, 1.9), (0.0, 2 * math.pi / 3)]:
            m = singlet_oracle(SettingsGeometry((a,), (b,)))
            assert check_parameter_independence(m, 1e-12).holds
            assert not check_outcome_independence(m, 1e-9).holds
            fact = check_factorizability(m, 1e-9)
            assert not fact.holds and fact.details["equals_pi_and_oi"]

    def test_bell_wigner_violation(self):
        m = singlet_oracle(SettingsGeometry.shared([0.0, math.pi / 3, 2 * math.pi / 3], ["a", "b", "c"]))
        rep = bell_wigner_check(m, ("a", "b", "c"), 1e-12)
        assert not rep.holds
        assert rep.details["P_ab"] == pytest.approx(0.125)
        assert rep.details["P_bc"] == pytest.approx(0.125)
        assert rep.details["P_ac"] == pytest.approx(0.375)

    def test_determinize_rejects_singlet(self):
        m = singlet_oracle(SettingsGeometry.shared([0.0, 1.0], ["a", "b"]))
        with pytest.raises(PreconditionError):
            determinize(m, 1e-9)


class TestLocalModels:
    def test_vertices(self):
        verts = deterministic_vertices()
        assert len(verts) == 16
        values = []
        for v in verts:
            a = [1 if p == 1.0 else -1 for p in v.left[0]]
            b = [1 if p == 1.0 else -1 for p in v.right[0]]
            values.append(a[0] * b[0] - a[0] * b[1] + a[1] * b[0] + a[1] * b[1])
            assert chsh_value(v) == values[-1]
        assert sorted(set(values)) == [-2, 2]

    def test_random_factorizable_bound(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            m = random_factorizable_model(rng)
            assert abs(chsh_value(m)) <= 2 + 1e-9
            assert check_factorizability(m, 1e-12).holds

    def test_factorizability_is_pi_and_oi(self):
        rng = np.random.default_rng(1)
        gens = [random_factorizable_model, random_no_signalling_model, random_generic_model]
        seen = set()
        for k in range(600):
            m = gens[k % 3](rng)
            fact = check_factorizability(m, 1e-12)
            pi = check_parameter_independence(m, 1e-12).holds
            oi = check_outcome_independence(m, 1e-12).holds
            assert fact.holds == (pi and oi)
            seen.add((pi, oi))
        assert {(True, True), (True, False)} <= seen

    def test_two_state_anticorrelated_average(self):
        j = np.zeros((2, 1, 1, 2, 2))
        j[0, 0, 0, 0, 1] = 1
        j[1, 0, 0, 1, 0] = 1
        m = HVModel.from_joint([0.5, 0.5], j)
        assert np.allclose(observable_joint(m, 0, 0), [[0, 0.5], [0.5, 0]])
        assert check_outcome_independence(m, 0).holds

    def test_setting_dependent_singles_break_pi(self):
        j = np.zeros((1, 1, 2, 2, 2))
        j[0, 0, 0, 0, 0] = 1  # (+,+) when the right setting is 0
        j[0, 0, 1, 1, 1] = 1  # (-,-) otherwise
        m = HVModel(np.ones(1), np.array([[1.0]]), np.array([[1.0, 0.0]]), j)
        assert not check_parameter_independence(m, 1e-9).holds
        assert check_outcome_independence(m, 1e-9).holds

    def test_missing_kernel(self):
        m = singlet_oracle(SettingsGeometry.chsh_optimal())
        with pytest.raises(ModelIncompleteError):
            observable_joint(m, "a9", "b1")


def anticorrelated_local(rng, n_lambda=3, stochastic_extra=True):
    """Shared settings a, b, c with right = 1 - left; left may carry one extra stochastic setting."""
    rho = rng.dirichlet(np.ones(n_lambda))
    det = rng.integers(0, 2, size=(n_lambda, 3)).astype(float)
    left = np.concatenate([det, rng.random((n_lambda, 1))], axis=1) if stochastic_extra else det
    labels = ("a", "b", "c", "d") if stochastic_extra else ("a", "b", "c")
    return HVModel.product(rho, left, 1 - det, left_labels=labels, right_labels=("a", "b", "c"))


class TestDeterminize:
    def test_already_deterministic(self):
        m = anticorrelated_local(np.random.default_rng(0), stochastic_extra=False)
        d = determinize(m, 1e-12)
        assert np.isin(d.left, [0, 1]).all() and np.isin(d.right, [0, 1]).all()
        # no stochastic kernel to split: one output state per input state, same weights
        assert np.allclose(d.rho, m.rho) and np.array_equal(d.left, m.left)

    @pytest.mark.parametrize("seed", range(10))
    def test_joints_preserved_and_binary(self, seed):
        m = anticorrelated_local(np.random.default_rng(seed))
        d = determinize(m, 1e-12)
        assert np.isin(d.left, [0.0, 1.0]).all() and np.isin(d.right, [0.0, 1.0]).all()
        for x in m.left_labels:
            for y in m.right_labels:
                assert np.allclose(observable_joint(d, x, y), observable_joint(m, x, y), atol=1e-12)
        assert bell_wigner_check(m, ("a", "b", "c"), 1e-12).holds

    def test_rejects_imperfect_anticorrelation(self):
        m = HVModel.product([1.0], [[0.5]], [[0.5]], left_labels=("a",), right_labels=("a",))
        with pytest.raises(PreconditionError):
            determinize(m, 1e-9)


class TestBigSpace:
    def test_sixteen_atoms_and_marginals(self):
        m = singlet_oracle(SettingsGeometry.chsh_optimal())
        big = to_big_space(m)
        assert len(big.space) == 16
        for x, y in itertools.product(m.left_labels, m.right_labels):
            assert np.allclose(big_space_joint(big, x, y), observable_joint(m, x, y), atol=1e-12)

    def test_no_conspiracy(self):
        m = random_factorizable_model(np.random.default_rng(3))
        big = to_big_space(m, ([0.3, 0.7], [0.6, 0.4]))
        for lam in big.lambda_events.values():
            for ch in list(big.left_choice.values()) + list(big.right_choice.values()):
                assert abs(correlation(big.space, lam, ch)) < 1e-12

    def test_coarse_checks(self):
        m = random_factorizable_model(np.random.default_rng(4))
        big = to_big_space(m)
        parts = {(x, y): big.lambda_partition() for x in m.left_labels for y in m.right_labels}
        fact = check_coarse_locality(big, parts, "FACT", 1e-12)
        assert fact.holds
        assert check_coarse_locality(big, parts, "PI", 1e-12).holds
        assert check_coarse_locality(big, parts, "OI", 1e-12).holds
        s = singlet_oracle(SettingsGeometry.chsh_optimal())
        sb = to_big_space(s)
        trivial = {(x, y): Partition.trivial(sb.space) for x in s.left_labels for y in s.right_labels}
        assert check_coarse_locality(sb, trivial, "PI", 1e-12).holds
        assert not check_coarse_locality(sb, trivial, "OI", 1e-9).holds

    def test_missing_partition(self):
        big = to_big_space(singlet_oracle(SettingsGeometry.chsh_optimal()))
        with pytest.raises(ArityError):
            check_coarse_locality(big, {}, "OI")


@pytest.fixture(scope="module")
def szabo():
    return build_szabo_model(singlet_oracle(SettingsGeometry.chsh_optimal()), tol=1e-9, seed=0,
                             check_multiplicity=False)


class TestSzabo:
    def test_sizes(self, szabo):
        assert len(szabo.space) == 256
        assert [szabo.atoms_at_definition[k] for k in ("A1B1", "A1B2", "A2B1", "A2B2")] == [16, 32, 64, 128]

    def test_requirements(self, szabo):
        reps = verify_szabo_model(szabo, 1e-9)
        assert reps and all(r.max_residual < 1e-9 for r in reps.values())

    def test_reproduces_targets(self, szabo):
        target = singlet_oracle(SettingsGeometry.chsh_optimal())
        joints = np.array([[big_space_joint(szabo.big, x, y) for y in ("b1", "b2")] for x in ("a1", "a2")])
        assert chsh_value(joints) == pytest.approx(chsh_value(target), abs=1e-9)

    def test_weak_holds_strong_fails(self, szabo):
        fam = szabo_family(szabo)
        parts = szabo_partitions(szabo)
        assert weak_pcc_check(fam, [parts[k] for k in sorted(parts)], 1e-9).holds
        cands = strong_pcc_candidates(szabo)
        assert len(cands) >= 16
        assert not any(strong_pcc_check(fam, p, 1e-9).holds for _, p in cands)

    def test_coarse_oi_holds(self, szabo):
        assert check_coarse_locality(szabo.big, szabo_partitions(szabo), "OI", 1e-9).holds

    def test_boolean_audit_catches(self, szabo):
        rep = audit_boolean_combinations(szabo, 1e-3)
        assert not rep.holds and rep.details["max_abs_correlation"] > 1e-3
        assert max(rep.details["single_cause_max_abs_correlation"].values()) < 1e-9

    def test_common_common_cause_audit_clean(self):
        m = random_factorizable_model(np.random.default_rng(5))
        rep = audit_boolean_combinations(common_common_cause_model(m), 1e-12)
        assert rep.holds

    def test_rejects_signalling_target(self):
        j = np.zeros((2, 2, 2, 2))
        j[:, 0, 0, 0] = 1
        j[:, 1, 1, 1] = 1
        with pytest.raises(PreconditionError):
            build_szabo_model(j)


def test_lattice_embedding_matches_model():
    m = singlet_oracle(SettingsGeometry.chsh_optimal())
    emb = embed_in_lattice(m)
    ens = emb.ensemble
    assert ens.lattice.T == 4 and ens.lattice.X == 6
    from causality_lab.spacetime_sel import LocalEvent
    both = LocalEvent.from_patterns([emb.left_outcome, emb.right_outcome], [(1, 1)])
    # P(++) averaged over uniform setting choices
    want = np.mean([observable_joint(m, i, j)[0, 0] for i in range(2) for j in range(2)])
    assert float(ens.prob(both)) == pytest.approx(want, abs=1e-12)
