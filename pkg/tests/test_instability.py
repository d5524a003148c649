from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from landscape_lab.environment import SitePoint
from landscape_lab.errors import DomainError, ParameterError
from landscape_lab.instability import (InstabilityGraph, Island, LevelProfile, PointRole, Side, box_dimension,
                                       build_instability_graph, dyadic_scales, extract_islands, interfaces_from_anchor,
                                       isolation_test, longest_instability_stretch, points_of_increase,
                                       random_walk_dimension)

# ---------------------------------------------------------------------------
# points of increase on hand-made profiles


def mesh_profile(f, n: int = 201) -> LevelProfile:
    xs = np.linspace(-1.0, 1.0, n)
    return LevelProfile(0, xs, f(xs))


def test_strictly_increasing_profile():
    p = mesh_profile(lambda x: x)
    np.testing.assert_array_equal(points_of_increase(p, 1e-9), np.arange(201))
    for i in range(201):
        assert not isolation_test(p, i, Side.LEFT, 1e-9)
        assert not isolation_test(p, i, Side.RIGHT, 1e-9)


def test_constant_profile():
    assert points_of_increase(mesh_profile(lambda x: 0 * x + 3.0), 1e-9).size == 0


def test_kink_profile():
    p = mesh_profile(lambda x: np.maximum(0.0, x))
    got = points_of_increase(p, 1e-9)
    np.testing.assert_array_equal(got, np.flatnonzero(p.xs >= -1e-12))
    zero = int(np.argmin(np.abs(p.xs)))
    assert isolation_test(p, zero, Side.LEFT, 1e-9)
    assert not isolation_test(p, zero, Side.RIGHT, 1e-9)
    with pytest.raises(DomainError):
        isolation_test(p, zero - 1, Side.LEFT, 1e-9)


def test_decreasing_profile_rejected():
    with pytest.raises(DomainError):
        points_of_increase(mesh_profile(lambda x: -x), 1e-9)
    with pytest.raises(ParameterError):
        LevelProfile(0, np.arange(3), np.arange(4.0))


def brute_points(f: np.ndarray, tol: float) -> list[int]:
    """Direct reading of the rule: the sample to the left is lower than the sample to the right."""
    n = len(f)
    out = []
    for i in range(n):
        lo = f[i - 1] if i > 0 else f[i]
        hi = f[i + 1] if i < n - 1 else f[i]
        if lo < hi - tol:
            out.append(i)
    return out


monotone = st.lists(st.sampled_from([0.0, 0.0, 0.0, 1.0, 2.5]), min_size=1, max_size=40).map(
    lambda steps: np.cumsum(steps))


@given(monotone)
def test_points_of_increase_match_the_rule(f):
    p = LevelProfile(0, np.arange(len(f)), f)
    assert points_of_increase(p, 1e-9).tolist() == brute_points(f, 1e-9)


@given(monotone)
def test_no_point_is_isolated_on_both_sides(f):
    p = LevelProfile(0, np.arange(len(f)), f)
    for i in points_of_increase(p, 1e-9).tolist():
        assert not (isolation_test(p, i, Side.LEFT, 1e-9) and isolation_test(p, i, Side.RIGHT, 1e-9))


@given(monotone)
def test_closure_is_idempotent(f):
    p = LevelProfile(0, np.arange(len(f)), f)
    once = set(points_of_increase(p, 1e-9, closure=True).tolist())
    # closing again adds nothing: no missing point has members on both sides
    assert not any(i - 1 in once and i + 1 in once for i in range(1, len(f) - 1) if i not in once)
    plain = set(points_of_increase(p, 1e-9).tolist())
    assert plain <= once


# ---------------------------------------------------------------------------
# island extraction from interface pairs


def test_equal_interfaces_give_no_island():
    ex = extract_islands([3, 3, 4, 5], [4, 4, 5, 6])
    assert ex.islands == [] and ex.truncated == [] and ex.strands == []


def test_single_bump_gives_one_island():
    k = 10
    j = np.arange(-2 * k, 2 * k + 1)
    lo = np.zeros(j.size, dtype=int)
    hi = lo + 1 + np.maximum(0, k - np.abs(j))
    ex = extract_islands(lo, hi, levels=np.arange(j.size))
    assert len(ex.islands) == 1 and not ex.truncated
    isl = ex.islands[0]
    t = j[list(isl.levels)] / k
    assert t.min() > -1 and t.max() < 1
    assert isl.levels == tuple(range(isl.levels[0], isl.levels[-1] + 1))
    assert isl.lifetime == 2 * k - 1
    assert all(l == 1 for l in isl.left)
    assert isl.tip == SitePoint(isl.levels[-1], 1) and isl.bottom == SitePoint(isl.levels[0], 1)


def test_open_components_are_truncated():
    ex = extract_islands([0, 0, 0], [5, 5, 1])
    assert ex.islands == [] and len(ex.truncated) == 1
    ex = extract_islands([1, -1, 1], [2, 3, 2], width=6)
    assert ex.islands == [] and len(ex.truncated) == 1


def test_misordered_interfaces_rejected():
    with pytest.raises(ParameterError):
        extract_islands([3, 4], [2, 5])
    with pytest.raises(ParameterError):
        extract_islands([3, 4], [5])


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(0, 6)), min_size=1, max_size=40))
def test_extracted_islands_are_well_formed(rows):
    lo = [a for a, _ in rows]
    hi = [a + 1 + g for a, g in rows]
    ex = extract_islands(lo, hi, width=40)
    seen: set = set()
    for isl in ex.islands + ex.truncated + ex.strands:
        assert all(l <= r for l, r in zip(isl.left, isl.right))
        assert not (isl.cells() & seen)
        seen |= isl.cells()
        assert len({isl.tip}) == 1 and isl.tip.level == max(isl.levels)
        assert isl.bottom.level == min(isl.levels)
    for isl in ex.islands:
        assert isl.n_interior >= 1


def test_island_json_round_trip():
    isl = Island((3, 4, 5), (10, 9, 10), (11, 13, 10))
    assert Island.from_json(isl.to_json()) == isl
    roles = isl.roles()
    assert roles[(5, 10)] is PointRole.TIP and roles[(3, 10)] is PointRole.BOTTOM
    assert roles[(4, 9)] is PointRole.LEFT and roles[(4, 13)] is PointRole.RIGHT and roles[(3, 11)] is PointRole.RIGHT


# ---------------------------------------------------------------------------
# the graph on simulated fields


def test_interfaces_bracket_the_anchor(small_runs):
    for _, df, g in small_runs:
        psi = interfaces_from_anchor(df, g.tol_flat)
        a = df.anchor
        assert psi.minus[a.level] < a.x < psi.plus[a.level]
        w = df.valid_width
        for j, t in enumerate(psi.levels):
            between = df.D[t, psi.minus[j] + 1: psi.plus[j]]
            assert np.all(np.abs(between - df.D0) <= g.tol_flat)
            assert psi.minus[j] <= psi.plus[j]
            assert 0 <= psi.plus[j] <= w and -1 <= psi.minus[j] < w


def test_interfaces_restart_inside_the_flat_set(small_runs):
    for _, df, g in small_runs:
        psi = interfaces_from_anchor(df, g.tol_flat)
        tried = 0
        for t in range(df.n_levels):
            m, p = int(psi.minus[t]), int(psi.plus[t])
            if m >= 0 and m + 2 <= p:
                again = interfaces_from_anchor(df, g.tol_flat, SitePoint(t, m + 1))
                np.testing.assert_array_equal(again.minus, psi.minus)
                np.testing.assert_array_equal(again.plus, psi.plus)
                tried += 1
        assert tried > 0


def test_interface_points_inside_the_window_are_instability_points(small_runs):
    for _, df, g in small_runs:
        w = df.valid_width
        for j, t in enumerate(g.psi.levels):
            for x in (int(g.psi.minus[j]), int(g.psi.plus[j])):
                if 0 < x < w - 1:
                    assert g.contains(SitePoint(int(t), x))


def test_partition_of_instability_points(small_runs):
    for _, _, g in small_runs:
        roles = g.roles()
        pts = {(k, int(x)) for k, row in enumerate(g.points) for x in row}
        assert pts <= set(roles)
        for isl in g.islands:
            for cell, role in isl.roles().items():
                assert cell in pts
                assert roles[cell] is role
            inner = {(t, x) for t, l, r in zip(isl.levels, isl.left, isl.right) for x in range(l + 1, r)}
            assert not (inner & pts)


def test_islands_have_disjoint_closures(small_runs):
    # closures include the boundary cells; distinct islands are at least one cell apart
    for _, _, g in small_runs:
        seen: set = set()
        for isl in g.islands + g.truncated:
            assert not (isl.cells() & seen)
            seen |= isl.cells()


def test_isolation_matches_boundaries(small_runs):
    for _, df, g in small_runs:
        strand = set()
        for s in g.strands + g.truncated:
            strand |= s.cells()
        roles = g.roles()
        for k in range(df.n_levels):
            p = LevelProfile.from_field(df, k)
            for x in g.points[k].tolist():
                right = isolation_test(p, x, Side.RIGHT, g.tol_flat)
                left = isolation_test(p, x, Side.LEFT, g.tol_flat)
                assert not (left and right)
                role = roles[(k, x)]
                if role is PointRole.LEFT:
                    assert right
                if role is PointRole.RIGHT:
                    assert left
                if right and role is PointRole.DUST:
                    # the flat neighbour belongs to a component too thin or too open to be an island
                    assert (k, x) in strand or (k, x + 1) in strand


def test_graph_json_round_trip(small_run):
    _, _, g = small_run
    back = InstabilityGraph.from_json(g.to_json())
    assert back.islands == g.islands and back.truncated == g.truncated and back.strands == g.strands
    assert all(np.array_equal(a, b) for a, b in zip(back.points, g.points))
    np.testing.assert_array_equal(back.psi.plus, g.psi.plus)


def test_longest_stretch():
    g = InstabilityGraph(1e-9, [np.array([1, 2, 3, 7]), np.array([], dtype=int), np.array([4, 5])], [], [], [], 10)
    assert longest_instability_stretch(g) == 3


# ---------------------------------------------------------------------------
# box counting


def test_full_interval_has_dimension_one():
    mesh = 1e-3
    pts = np.arange(0, 20001) * mesh
    assert box_dimension(pts, dyadic_scales(mesh, 20.0), mesh=mesh) == pytest.approx(1.0, abs=0.05)


def test_single_point_has_dimension_zero():
    assert box_dimension([0.5], dyadic_scales(1e-3, 1.0), min_points=1) == pytest.approx(0.0, abs=1e-12)


def test_box_dimension_preconditions():
    with pytest.raises(DomainError):
        box_dimension(np.arange(10.0), [0.5, 0.25])
    with pytest.raises(DomainError):
        box_dimension(np.arange(300) * 1e-3, [0.5, 0.25], mesh=1e-2)
    with pytest.raises(DomainError):
        box_dimension(np.arange(300.0), [0.5])


def test_dyadic_scales_range():
    s = dyadic_scales(1e-3, 20.0)
    assert s == sorted(s, reverse=True)
    assert min(s) >= 4e-3 and max(s) <= 20.0 / 8
    assert all(np.log2(e) == round(np.log2(e)) for e in s)


def test_random_walk_oracle():
    slopes = random_walk_dimension(2 ** 16, 6, seed=3)
    assert abs(float(np.mean(slopes)) - 0.5) <= 0.1


def test_graph_at_tighter_and_looser_tolerance(small_run):
    _, df, g = small_run
    counts = [len(build_instability_graph(df, g.tol_flat * f).islands) for f in (1.0, 10 ** 0.5, 10.0)]
    assert max(abs(c - counts[0]) for c in counts) <= 0.1 * counts[0]


def test_psi_plus_paths_are_ordered_and_touch_only_at_jumps(small_runs):
    for _, df, g in small_runs:
        w = df.valid_width
        t = 20
        p = LevelProfile.from_field(df, t)
        pts = [x for x in g.points[t].tolist()
               if 0 < x < w - 1 and not isolation_test(p, x, Side.RIGHT, g.tol_flat)][::4]
        paths = [interfaces_from_anchor(df, g.tol_flat, SitePoint(t, x)).plus for x in pts]
        for i in range(len(pts) - 1):
            a, b = paths[i], paths[i + 1]
            assert np.all(a <= b)
            ha, hb = df.D[t, pts[i]], df.D[t, pts[i + 1]]
            for s in np.flatnonzero((a == b) & (a > 0) & (a < w)).tolist():
                x = int(a[s])
                # one mesh step of D spans both launch heights
                assert df.D[s, x - 1] >= ha - g.tol_flat and df.D[s, x] <= hb + g.tol_flat
