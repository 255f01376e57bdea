from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from causality_lab.errors import InvalidGeometryError, InvalidPartitionError, NullConditioningError
from causality_lab.spacetime_sel import (
    Hypersurface,
    LatticeSpacetime,
    LocalEvent,
    WorldEnsemble,
    causal_future,
    causal_past,
    check_ratio_assumption,
    check_SELD1,
    check_SELD2,
    check_SELS,
    check_strong_SELD,
    concordance_surface,
    divides,
    history_partition,
    local_ca_ensemble,
    mixture,
    pr_history,
    pr_tw,
    product_ensemble,
    random_sparse_ensemble,
    spacelike,
    table_mountain,
)


def planted(lat, assignments, weights):
    """Worlds that are zero except at the listed points."""
    rows = []
    for a in assignments:
        g = np.zeros((lat.T, lat.X), dtype=np.uint8)
        for p, v in a.items():
            g[p] = v
        rows.append(g.reshape(-1))
    return WorldEnsemble(lat, np.array(rows), weights)


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


class TestGeometry:
    def test_two_cones_sixteen_points(self):
        lat = LatticeSpacetime(6, 8)
        r = lat.region([(2, 2), (2, 5)])
        past = causal_past(lat, r)
        assert len(past) == 16
        assert past.points == oracles.past_points(6, 8, r.points)

    def test_single_point_triangle(self):
        lat = LatticeSpacetime(5, 5)
        past = causal_past(lat, lat.region([(3, 2)]))
        assert past.points == {(t, x) for t in range(4) for x in range(5) if abs(x - 2) <= 3 - t}

    def test_empty_region(self):
        lat = LatticeSpacetime(3, 3)
        assert causal_past(lat, lat.region([])).is_empty()

    def test_out_of_bounds(self):
        lat = LatticeSpacetime(3, 3)
        with pytest.raises(InvalidGeometryError):
            lat.region([(3, 0)])
        with pytest.raises(InvalidGeometryError):
            LatticeSpacetime(0, 3)

    def test_achronality_enforced(self):
        with pytest.raises(InvalidGeometryError):
            Hypersurface((0, 2))
        with pytest.raises(InvalidGeometryError):
            Hypersurface((0, 0)).validate(LatticeSpacetime(3, 3))

    def test_enumerate_all_surfaces(self):
        lat = LatticeSpacetime(3, 3)
        surfaces = Hypersurface.enumerate_all(lat)
        # brute force over all height triples in [-1, 2]
        heights = [(a, b, c) for a in range(-1, 3) for b in range(-1, 3) for c in range(-1, 3)
                   if abs(a - b) <= 1 and abs(b - c) <= 1]
        assert sorted(s.heights for s in surfaces) == sorted(heights)

    def test_divides(self):
        lat = LatticeSpacetime(4, 7)
        e = lat.region([(3, 3)])
        assert divides(Hypersurface.flat(lat, 0), e)
        assert not divides(Hypersurface.flat(lat, 3), e)
        # light-like staircase just under the cone boundary
        stair = Hypersurface((-1, 0, 1, 2, 1, 0, -1))
        assert divides(stair, e)
        assert not divides(Hypersurface.flat(lat, -1), e)

    def test_future_and_spacelike(self):
        lat = LatticeSpacetime(4, 7)
        a, b = lat.region([(3, 0)]), lat.region([(3, 6)])
        assert spacelike(lat, a, b)
        assert not spacelike(lat, a, lat.region([(1, 1)]))
        assert (1, 1) in causal_future(lat, lat.region([(0, 0)]))


class TestGeometryProperties:
    regions = st.lists(st.tuples(st.integers(0, 4), st.integers(0, 5)), max_size=5)

    @settings(max_examples=100, deadline=None)
    @given(regions, regions)
    def test_past_idempotent_and_monotone(self, a, b):
        lat = LatticeSpacetime(5, 6)
        ra, rb = lat.region(a), lat.region(a + b)
        pa = causal_past(lat, ra)
        assert causal_past(lat, pa) == pa
        assert ra.points <= pa.points
        assert pa.points <= causal_past(lat, rb).points
        assert pa.points == oracles.past_points(5, 6, ra.points)

    @settings(max_examples=100, deadline=None)
    @given(regions.filter(bool), st.integers(0, 4))
    def test_flat_slices_divide_future_events(self, pts, t):
        lat = LatticeSpacetime(5, 6)
        r = lat.region(pts)
        if min(p[0] for p in pts) > t:
            assert divides(Hypersurface.flat(lat, t), r)


class TestConcordance:
    def test_f_already_in_past(self):
        lat = LatticeSpacetime(4, 7)
        h = Hypersurface.flat(lat, 1)
        out = concordance_surface(lat, lat.region([(3, 0)]), lat.region([(1, 6)]), h)
        assert out == h

    def test_summit_over_single_point(self):
        lat = LatticeSpacetime(4, 7)
        h = Hypersurface.flat(lat, 0)
        out = concordance_surface(lat, lat.region([(3, 0)]), lat.region([(1, 5)]), h)
        assert out.heights == (0, 0, 0, 0, 0, 1, 0)

    def test_overlap_rejected(self):
        lat = LatticeSpacetime(4, 7)
        with pytest.raises(InvalidGeometryError):
            concordance_surface(lat, lat.region([(3, 2)]), lat.region([(3, 4)]), Hypersurface.flat(lat, 0))

    @settings(max_examples=150, deadline=None)
    @given(st.integers(0, 6), st.integers(0, 6), st.lists(st.integers(-1, 1), min_size=6, max_size=6),
           st.integers(-1, 1))
    def test_concordance_properties(self, ex, fx, steps, h0):
        lat = LatticeSpacetime(5, 7)
        hs = [h0]
        for d in steps:
            hs.append(min(max(hs[-1] + d, -1), 1))
        h = Hypersurface(tuple(hs))
        e = lat.region([(4, ex)])
        f = lat.region([(3, fx)])
        try:
            out = concordance_surface(lat, e, f, h)
        except InvalidGeometryError:
            return
        out.validate(lat)
        cone_e = causal_past(lat, e)
        assert out.past(lat) & cone_e == h.past(lat) & cone_e
        assert out.is_past(f)


# ---------------------------------------------------------------------------
# conditional probabilities on worlds
# ---------------------------------------------------------------------------


class TestPrTw:
    def test_fair_coins(self):
        lat = LatticeSpacetime(2, 2)
        ens = product_ensemble(lat, Fr(1, 2))
        h = Hypersurface.flat(lat, 0)
        e = LocalEvent.point_is((1, 0))
        assert all(pr_tw(ens, h, w, e) == Fr(1, 2) for w in range(ens.n_worlds))

    def test_past_events_certain(self):
        lat = LatticeSpacetime(2, 2)
        ens = product_ensemble(lat, Fr(1, 3))
        h = Hypersurface.flat(lat, 0)
        e = LocalEvent.point_is((0, 1))
        for w in range(ens.n_worlds):
            if ens.value(w, (0, 1)) == 1:
                assert pr_tw(ens, h, w, e) == 1

    def test_two_world_split_above_surface(self):
        lat = LatticeSpacetime(3, 3)
        ens = planted(lat, [{(2, 1): 1}, {}], [Fr(7, 10), Fr(3, 10)])
        h = Hypersurface.flat(lat, 0)
        e = LocalEvent.point_is((2, 1))
        w = next(i for i in range(2) if ens.value(i, (2, 1)) == 1)
        assert pr_tw(ens, h, w, e) == Fr(7, 10)

    def test_history_variants(self):
        lat = LatticeSpacetime(2, 2)
        ens = product_ensemble(lat, Fr(1, 4))
        e = LocalEvent.point_is((1, 1))
        assert pr_history(ens, ens.history_of(0, lat.region([])), e) == ens.prob(e) == Fr(1, 4)
        h = Hypersurface.flat(lat, 0)
        for w in range(ens.n_worlds):
            assert pr_history(ens, ens.history_of(w, h.past(lat)), e) == pr_tw(ens, h, w, e)

    def test_null_history(self):
        lat = LatticeSpacetime(2, 1)
        ens = planted(lat, [{(0, 0): 1}, {}], [Fr(1), Fr(0)])
        e = LocalEvent.point_is((1, 0))
        with pytest.raises(NullConditioningError):
            pr_tw(ens, Hypersurface.flat(lat, 0), 1, e)


# ---------------------------------------------------------------------------
# locality checks
# ---------------------------------------------------------------------------


LAT = LatticeSpacetime(3, 5)
FLAT0 = Hypersurface.flat(LAT, 0)


class TestChecks:
    def test_product_holds_everywhere(self):
        ens = product_ensemble(LAT, Fr(1, 3), free=[(0, 1), (0, 3), (1, 0), (2, 0), (2, 4)])
        e, f = LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 4))
        assert check_SELS(ens, e, FLAT0, 0).holds
        assert check_SELD1(ens, e, f, FLAT0, 0).holds
        g = LocalEvent.point_is((0, 4))
        assert check_SELD2(ens, e, g, FLAT0, 0).holds
        rep = check_ratio_assumption(ens, e, f, FLAT0, 0)
        assert rep.holds

    def test_single_world_vacuous(self):
        ens = planted(LAT, [{(2, 0): 1}], [Fr(1)])
        assert check_SELS(ens, LocalEvent.point_is((2, 0)), FLAT0, 0).holds

    def test_sels_fails_on_spacelike_dependence(self):
        # E copies a past point outside its cone
        ens = planted(LAT, [{(0, 4): 1, (2, 0): 1}, {}], [Fr(1, 2), Fr(1, 2)])
        e = LocalEvent.point_is((2, 0))
        rep = check_SELS(ens, e, FLAT0, 0)
        assert not rep.holds
        assert rep.max_residual == pytest.approx(1.0)
        assert not check_SELD2(ens, e, LocalEvent.point_is((0, 4)), FLAT0, 0).holds

    def test_seld1_planted_correlation(self):
        ens = planted(LAT, [{(2, 0): 1, (2, 4): 1}, {}], [Fr(1, 2), Fr(1, 2)])
        e, f = LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 4))
        rep = check_SELD1(ens, e, f, FLAT0, 0)
        assert not rep.holds
        assert rep.max_residual == pytest.approx(0.25)

    def test_seld1_geometry_errors(self):
        ens = product_ensemble(LAT, Fr(1, 2), free=[(2, 0)])
        with pytest.raises(InvalidGeometryError, match="spacelike"):
            check_SELD1(ens, LocalEvent.point_is((2, 0)), LocalEvent.point_is((1, 0)), FLAT0)
        with pytest.raises(InvalidGeometryError, match="overlap"):
            check_SELD1(ens, LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 2)), FLAT0)
        with pytest.raises(InvalidGeometryError, match="future"):
            check_SELD1(ens, LocalEvent.point_is((0, 0)), LocalEvent.point_is((2, 4)), FLAT0)

    def test_seld2_geometry_errors(self):
        ens = product_ensemble(LAT, Fr(1, 2), free=[(2, 0)])
        with pytest.raises(InvalidGeometryError):
            check_SELD2(ens, LocalEvent.point_is((2, 0)), LocalEvent.point_is((0, 1)), FLAT0)
        with pytest.raises(InvalidGeometryError):
            check_SELD2(ens, LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 4)), FLAT0)

    def test_seld2_degenerate_flag(self):
        ens = product_ensemble(LAT, Fr(1, 2), free=[(2, 0)])
        rep = check_SELD2(ens, LocalEvent.point_is((2, 0)), None, Hypersurface.flat(LAT, -1), 0)
        assert "degenerate-geometry" in rep.flags

    def test_sels_needs_dividing_surface(self):
        ens = product_ensemble(LAT, Fr(1, 2), free=[(2, 0)])
        with pytest.raises(InvalidGeometryError):
            check_SELS(ens, LocalEvent.point_is((2, 0)), Hypersurface.flat(LAT, -1))

    def test_ratio_planted_violation(self):
        # (0,3) lies in the past of the surface but outside both wing cones
        lat = LatticeSpacetime(3, 7)
        ens = planted(lat, [{(0, 3): 1, (2, 0): 1, (2, 6): 1}, {(2, 0): 1}], [Fr(1, 2), Fr(1, 2)])
        e, f = LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 6))
        h = Hypersurface.flat(lat, 0)
        rep = check_ratio_assumption(ens, e, f, h, 0)
        assert not rep.holds
        # world with the marker bit: pr_t(EF)/pr_HE(EF) = 2 while pr_HF(F)/pr_HE(F) = 1
        assert {(w.lhs, w.rhs) for w in rep.witnesses} >= {(2.0, 1.0)}
        assert check_SELD1(ens, e, f, h, 0).holds


class TestStrongSELD:
    lat = LatticeSpacetime(3, 6)

    def simpson(self):
        """Past bits at (0,2),(0,3) label four classes; classes 0 and 2 correlate
        the wing points positively, classes 1 and 3 negatively."""
        pos = [{(2, 0): 1, (2, 5): 1}, {}]
        neg = [{(2, 0): 1}, {(2, 5): 1}]
        rows = []
        for c, pattern in enumerate([pos, neg, pos, neg]):
            for a in pattern:
                a = dict(a)
                a[(0, 2)] = c & 1
                a[(0, 3)] = c >> 1
                rows.append(a)
        return planted(self.lat, rows, [Fr(1, 8)] * 8)

    def test_coarse_holds_while_history_partition_fails(self):
        ens = self.simpson()
        h = Hypersurface.flat(self.lat, 0)
        e, f = LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 5))
        fine = history_partition(ens, h.past(self.lat))
        assert not check_strong_SELD(ens, e, f, h, fine, variant=1, tol=0).holds
        coarse = [[w for w in range(8) if ens.value(w, (0, 3)) == k] for k in (0, 1)]
        assert check_strong_SELD(ens, e, f, h, coarse, variant=1, tol=0).holds
        assert not check_SELD1(ens, e, f, h, 0).holds

    def test_history_partition_matches_seld1(self):
        ens = self.simpson()
        h = Hypersurface.flat(self.lat, 0)
        e, f = LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 5))
        strong = check_strong_SELD(ens, e, f, h, history_partition(ens, h.past(self.lat)), variant=1, tol=0)
        assert strong.max_residual == pytest.approx(check_SELD1(ens, e, f, h, 0).max_residual)

    def test_split_history_class_rejected(self):
        ens = self.simpson()
        h = Hypersurface.flat(self.lat, 0)
        e, f = LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 5))
        with pytest.raises(InvalidPartitionError):
            check_strong_SELD(ens, e, f, h, [[0], list(range(1, 8))], variant=1)
        with pytest.raises(InvalidPartitionError):
            check_strong_SELD(ens, e, f, h, [[0, 1], [1, 2]], variant=1)


class TestGenerators:
    def test_ca_is_local(self):
        lat = LatticeSpacetime(3, 4)
        ens = local_ca_ensemble(lat, Fr(1, 2), [0, Fr(1, 2), 1, Fr(1, 2), Fr(1, 2), 0, Fr(1, 2), 1])
        assert ens.exact and sum(ens.weights) == 1
        e, f = LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 3))
        assert check_SELD1(ens, e, f, Hypersurface.flat(lat, 0), 0).holds
        assert check_SELS(ens, e, Hypersurface.flat(lat, 0), 0).holds

    def test_mixture_of_locals_correlates(self):
        lat = LatticeSpacetime(3, 4)
        a = product_ensemble(lat, Fr(1, 5), free=[(2, 0), (2, 3)])
        b = product_ensemble(lat, Fr(4, 5), free=[(2, 0), (2, 3)])
        m = mixture([a, b], [Fr(1, 2), Fr(1, 2)])
        e, f = LocalEvent.point_is((2, 0)), LocalEvent.point_is((2, 3))
        assert not check_SELD1(m, e, f, Hypersurface.flat(lat, 0), 0).holds

    def test_json_round_trip(self):
        ens = random_sparse_ensemble(LatticeSpacetime(3, 4), 9, 5)
        back = WorldEnsemble.from_json(ens.to_json())
        assert back.weights == ens.weights
        assert np.array_equal(back.worlds, ens.worlds)

    def test_weights_validated(self):
        from causality_lab.errors import InvalidSpaceError
        lat = LatticeSpacetime(1, 1)
        with pytest.raises(InvalidSpaceError):
            WorldEnsemble(lat, [[0], [1]], [Fr(1, 2), Fr(1, 3)])


# ---------------------------------------------------------------------------
# agreement with the brute-force oracle on random ensembles
# ---------------------------------------------------------------------------


ORACLE_LAT = LatticeSpacetime(3, 4)


@st.composite
def sparse_case(draw):
    seed = draw(st.integers(0, 10**6))
    n = draw(st.integers(1, 12))
    ens = random_sparse_ensemble(ORACLE_LAT, n, seed, max_mass=5)
    accept_e = draw(st.sets(st.integers(0, 3), min_size=1, max_size=3))
    accept_f = draw(st.sets(st.integers(0, 3), min_size=1, max_size=3))
    return ens, accept_e, accept_f


def pair_event(points, accepted):
    ev = LocalEvent(tuple(points), frozenset(accepted))
    pts = sorted(points)

    def pred(v):
        return sum(v[p] << i for i, p in enumerate(pts)) in accepted
    return ev, pred


@settings(max_examples=60, deadline=None)
@given(sparse_case())
def test_seld1_matches_oracle(case):
    ens, ae, af = case
    e, ep = pair_event([(2, 0), (1, 0)], ae)
    f, fp = pair_event([(2, 3), (1, 3)], af)
    h = Hypersurface.flat(ORACLE_LAT, 0)
    rep = check_SELD1(ens, e, f, h, 0)
    want = oracles.seld1_residual(ens, ep, fp, h.heights)
    assert rep.max_residual == pytest.approx(float(want), abs=1e-12)
    assert rep.holds == (want == 0)


@settings(max_examples=60, deadline=None)
@given(sparse_case())
def test_seld2_and_sels_match_oracle(case):
    ens, ae, af = case
    e, ep = pair_event([(2, 0), (2, 1)], ae)
    f, fp = pair_event([(0, 3), (1, 3)], af)
    h = Hypersurface((1, 1, 1, 1))
    if not h.is_past(f.region) or (f.region.points & causal_past(ORACLE_LAT, e.region).points):
        return
    rep = check_SELD2(ens, e, f, h, 0)
    want = oracles.seld2_residual(ens, ep, fp, e.region.points, h.heights)
    assert rep.max_residual == pytest.approx(float(want), abs=1e-12)
    sels = check_SELS(ens, e, h, 0)
    spread = oracles.sels_residual(ens, ep, e.region.points, h.heights)
    assert sels.holds == (spread == 0)


@settings(max_examples=60, deadline=None)
@given(sparse_case())
def test_sels_equivalent_to_seld2_all(case):
    ens, ae, _ = case
    e, _ = pair_event([(2, 0), (2, 1)], ae)
    for h in (Hypersurface((1, 1, 1, 1)), Hypersurface((0, 0, 1, 1)), Hypersurface((1, 0, 0, 0))):
        assert check_SELS(ens, e, h, 0).holds == check_SELD2(ens, e, None, h, 0).holds


def test_table_mountain_is_intersection():
    lat = LatticeSpacetime(4, 6)
    e = lat.region([(3, 1)])
    h = Hypersurface((1, 1, 1, 2, 2, 2))
    tm = table_mountain(lat, e, h)
    assert tm.points == oracles.surface_past(4, 6, h.heights) & oracles.past_points(4, 6, e.points)
