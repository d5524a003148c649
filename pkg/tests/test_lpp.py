from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from landscape_lab.environment import SitePoint, from_increments, from_weights, gen_environment
from landscape_lab.errors import DomainError, ParameterError
from landscape_lab.lpp import (Side, Sign, check_composition, composition_defect, extract_geodesic, passage_from,
                               path_weight, solve_to_target, tol_eq)

from .conftest import integer_increments

# ---------------------------------------------------------------------------
# independent oracles: exhaustive path enumeration


def lattice_paths(src: tuple[int, int], dst: tuple[int, int]):
    """Every up/right lattice path from ``src`` to ``dst`` as a list of (level, col) sites."""
    (k0, c0), (k1, c1) = src, dst
    ups, rights = k1 - k0, c1 - c0
    for pos in itertools.combinations(range(ups + rights), ups):
        k, c = k0, c0
        sites = [(k, c)]
        for i in range(ups + rights):
            if i in pos:
                k += 1
            else:
                c += 1
            sites.append((k, c))
        yield sites


def right_fold(w: np.ndarray, sites: list[tuple[int, int]]) -> float:
    """Path weight summed from the far end, the association order of the backward recursion."""
    acc = w[sites[-1]]
    for s in reversed(sites[:-1]):
        acc = w[s] + acc
    return float(acc)


def brute_discrete(w: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    n, m = w.shape
    out = np.full((n, m), -np.inf)
    for k in range(target[0] + 1):
        for c in range(target[1] + 1):
            out[k, c] = max(right_fold(w, p) for p in lattice_paths((k, c), target))
    return out


def semi_maximizers(paths: np.ndarray, src: tuple[int, int], p: int):
    """Best value and all maximizing exit sequences of the semi-discrete problem."""
    top = paths.shape[0] - 1
    k0, x0 = src
    best, arg = -np.inf, []
    for ts in itertools.combinations_with_replacement(range(x0, p + 1), top - k0):
        e, w = x0, 0.0
        for j, t in enumerate(ts):
            w += paths[k0 + j][t] - paths[k0 + j][e]
            e = t
        w += paths[top][p] - paths[top][e]
        if w > best + 1e-12:
            best, arg = w, [ts]
        elif abs(w - best) <= 1e-12:
            arg.append(ts)
    return best, arg


def runs_of(src: tuple[int, int], exits: tuple[int, ...], p: int) -> list[tuple[int, int]]:
    out, e = [], src[1]
    for t in exits:
        out.append((e, t))
        e = t
    out.append((e, p))
    return out


# ---------------------------------------------------------------------------
# discrete backend


def test_single_cell():
    env = from_weights([[2.5]])
    pf = solve_to_target(env, SitePoint(0, 0))
    assert pf.value(SitePoint(0, 0)) == 2.5
    g = extract_geodesic(pf, SitePoint(0, 0))
    assert g.points == [SitePoint(0, 0)]


def test_two_by_two_formula():
    w = np.array([[1.0, 2.0], [3.0, 4.0]])
    pf = solve_to_target(from_weights(w), SitePoint(1, 1))
    assert pf.value(SitePoint(0, 0)) == w[0, 0] + max(w[0, 1], w[1, 0]) + w[1, 1]
    np.testing.assert_array_equal(pf.values, brute_discrete(w, (1, 1)))


@given(arrays(float, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(0.01, 10.0, allow_nan=False)), st.data())
def test_discrete_equals_enumeration(w, data):
    n, m = w.shape
    p = data.draw(st.integers(0, m - 1))
    pf = solve_to_target(from_weights(w), SitePoint(n - 1, p))
    want = brute_discrete(w, (n - 1, p))
    assert np.array_equal(pf.values, want)


def test_unreachable_sites_are_minus_infinity():
    pf = solve_to_target(from_weights(np.ones((3, 4))), SitePoint(2, 1))
    assert np.all(pf.values[:, 2:] == -np.inf)
    assert np.all(np.isfinite(pf.values[:, :2]))


def test_target_must_be_on_top_level():
    env = from_weights(np.ones((3, 3)))
    with pytest.raises(ParameterError):
        solve_to_target(env, SitePoint(1, 1))
    with pytest.raises(ParameterError):
        solve_to_target(env, SitePoint(2, 3))


def test_discrete_tie_splits_and_remerges():
    # the paths through (1,0) and (0,1) tie; both continue through (1,1)
    w = np.array([[1.0, 5.0, 1.0], [5.0, 9.0, 1.0], [1.0, 9.0, 9.0]])
    env = from_weights(w)
    pf = solve_to_target(env, SitePoint(2, 2))
    src = SitePoint(0, 0)
    best = max(sum(w[s] for s in p) for p in lattice_paths((0, 0), (2, 2)))
    optimal = [p for p in lattice_paths((0, 0), (2, 2)) if sum(w[s] for s in p) == best]
    assert len(optimal) == 2
    left = extract_geodesic(pf, src, Side.LEFTMOST)
    right = extract_geodesic(pf, src, Side.RIGHTMOST)
    lp = {(q.level, q.x) for q in left.points}
    rp = {(q.level, q.x) for q in right.points}
    assert lp ^ rp == {(1, 0), (0, 1)}
    assert {frozenset(p) for p in optimal} == {frozenset(lp), frozenset(rp)}
    assert path_weight(env, left) == path_weight(env, right) == pf.value(src)


def test_discrete_composition_is_exact():
    # dyadic weights make every partial sum exact, so only the identity itself is tested
    rng = np.random.default_rng(4)
    env = from_weights(rng.integers(1, 64, size=(3, 3)) / 8.0)
    pf = solve_to_target(env, SitePoint(2, 2))
    for x in range(3):
        assert composition_defect(env, SitePoint(0, x), 1, pf) == 0.0


def test_discrete_composition_on_random_weights():
    env = gen_environment({"kind": "Exponential", "seed": 4, "n_levels": 3, "n_cols": 3, "rate": 1.0})
    pf = solve_to_target(env, SitePoint(2, 2))
    for x in range(3):
        assert composition_defect(env, SitePoint(0, x), 1, pf) <= tol_eq(pf.value(SitePoint(0, x)))


# ---------------------------------------------------------------------------
# semi-discrete backend


def test_one_level_formula():
    env = from_increments([[0.5, -1.0, 2.0, 0.25]], mesh=0.1)
    pf = solve_to_target(env, SitePoint(0, 3))
    b = env.paths[0]
    for x in range(4):
        assert pf.value(SitePoint(0, x)) == b[3] - b[x]
    assert pf.values[0, 4] == -np.inf


@given(st.integers(0, 10_000))
def test_semidiscrete_equals_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(1, 4)), int(rng.integers(2, 6))
    env = from_increments(integer_increments(rng, n, m))
    p = int(rng.integers(0, m))
    pf = solve_to_target(env, SitePoint(n - 1, p))
    for x in range(p + 1):
        best, arg = semi_maximizers(env.paths, (0, x), p)
        assert pf.value(SitePoint(0, x)) == best
        lo = tuple(min(c) for c in zip(*arg))
        hi = tuple(max(c) for c in zip(*arg))
        for side, ext in ((Side.LEFTMOST, lo), (Side.RIGHTMOST, hi)):
            g = extract_geodesic(pf, SitePoint(0, x), side)
            assert [(a, b) for _, a, b in g.runs] == runs_of((0, x), ext, p)


def test_geodesic_from_target_is_a_point():
    env = gen_environment({"kind": "SemiDiscrete", "seed": 2, "n_levels": 3, "mesh": 0.1, "x_min": 0, "x_max": 1})
    pf = solve_to_target(env, SitePoint(2, 5))
    g = extract_geodesic(pf, SitePoint(2, 5))
    assert g.points == [SitePoint(2, 5)]


def test_unreachable_source_is_a_domain_error():
    env = gen_environment({"kind": "SemiDiscrete", "seed": 2, "n_levels": 3, "mesh": 0.1, "x_min": 0, "x_max": 1})
    pf = solve_to_target(env, SitePoint(2, 5))
    with pytest.raises(DomainError):
        extract_geodesic(pf, SitePoint(0, 7))


def test_unique_maximizers_give_one_geodesic(small_run):
    env, df, _ = small_run
    pf = df.pf_minus
    rng = np.random.default_rng(5)
    for _ in range(30):
        v = SitePoint(int(rng.integers(0, env.n_levels)), int(rng.integers(0, pf.target.x + 1)))
        assert extract_geodesic(pf, v, Side.LEFTMOST).runs == extract_geodesic(pf, v, Side.RIGHTMOST).runs


def test_geodesic_invariants(small_run):
    env, df, _ = small_run
    for pf in (df.pf_minus, df.pf_plus):
        rng = np.random.default_rng(6)
        for _ in range(30):
            v = SitePoint(int(rng.integers(0, env.n_levels)), int(rng.integers(0, pf.target.x + 1)))
            for side in Side:
                g = extract_geodesic(pf, v, side)
                assert g.source == v and g.end == pf.target
                assert np.all(np.diff(g.levels) == 1)
                assert np.all(g.starts <= g.ends)
                assert np.all(g.starts[1:] == g.ends[:-1])
                assert abs(path_weight(env, g) - pf.value(v)) <= tol_eq(pf.value(v))
                # Bellman consistency on every level
                for k, a, b in g.runs[:-1]:
                    step = env.paths[k, b] - env.paths[k, a]
                    assert abs(pf.value(SitePoint(k, a)) - (step + pf.value(SitePoint(k + 1, b)))) \
                        <= tol_eq(pf.value(SitePoint(k, a)))


def _ordered(a, b) -> bool:
    return bool(np.all(a.starts <= b.starts) and np.all(a.ends <= b.ends))


@given(st.integers(0, 10_000))
def test_geodesic_ordering_without_ties(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 6)), int(rng.integers(3, 12))
    env = from_increments(rng.normal(size=(n, m - 1)))
    pf = solve_to_target(env, SitePoint(n - 1, m - 1))
    k = int(rng.integers(0, n))
    x, y = sorted(rng.choice(m, size=2, replace=False).tolist())
    assert _ordered(extract_geodesic(pf, SitePoint(k, x), Side.RIGHTMOST),
                    extract_geodesic(pf, SitePoint(k, y), Side.LEFTMOST))


@given(st.integers(0, 10_000))
def test_same_side_ordering_with_ties(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(2, 6)), int(rng.integers(3, 12))
    env = from_increments(integer_increments(rng, n, m, -1, 1))
    pf = solve_to_target(env, SitePoint(n - 1, m - 1))
    k = int(rng.integers(0, n))
    x, y = sorted(rng.choice(m, size=2, replace=False).tolist())
    for side in Side:
        assert _ordered(extract_geodesic(pf, SitePoint(k, x), side), extract_geodesic(pf, SitePoint(k, y), side))
    assert _ordered(extract_geodesic(pf, SitePoint(k, x), Side.LEFTMOST),
                    extract_geodesic(pf, SitePoint(k, x), Side.RIGHTMOST))


def test_composition_small_semidiscrete():
    env = gen_environment({"kind": "SemiDiscrete", "seed": 9, "n_levels": 10, "mesh": 0.01, "x_min": 0, "x_max": 1})
    pf = solve_to_target(env, SitePoint(9, 80), Sign.MINUS)
    rep = check_composition(env, None, None, pf, n_samples=50, rng=np.random.default_rng(1))
    assert rep.n_samples == 50
    assert rep.max_defect < 1e-9


def test_composition_rejects_bad_levels():
    env = from_weights(np.ones((3, 3)))
    pf = solve_to_target(env, SitePoint(2, 2))
    with pytest.raises(ParameterError):
        check_composition(env, SitePoint(0, 0), 0, pf)
    with pytest.raises(ParameterError):
        check_composition(env, SitePoint(0, 0), 2, pf)
    rep = check_composition(env, SitePoint(0, 0), 1, pf)
    assert rep.max_defect == 0.0


def test_point_to_point_values_match_enumeration():
    rng = np.random.default_rng(3)
    w = rng.uniform(0.1, 1.0, size=(3, 4))
    env = from_weights(w)
    out = passage_from(env, SitePoint(0, 1), 2)
    for j in range(3):
        for c in range(1, 4):
            assert out[j, c] == pytest.approx(max(sum(w[s] for s in p) for p in lattice_paths((0, 1), (j, c))),
                                              abs=1e-12)
