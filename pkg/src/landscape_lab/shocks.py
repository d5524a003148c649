"""Competition functions, shock interfaces, shock ages and the geodesic taxonomy.

Mesh semantics
--------------
A mesh site ``v = (k, x)`` stands for a small cell. The left and right limits
of geodesics at ``v`` are represented by the neighbouring sites: ``L`` is the
leftmost geodesic from ``(k, x-1)``, ``R`` the rightmost geodesic from
``(k, x+1)`` and ``M`` the leftmost geodesic from ``v`` itself. Two such paths
*coincide initially* when they share a site on the origin level (other than a
common starting site). They *meet at offset r* when their runs on level
``k + r`` overlap.

With these conventions ``L^-`` and ``R^+`` never meet exactly when
``D(x-1) > D(x+1)``, so the geodesic instability test agrees with the
point-of-increase rule on the difference profile.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .busemann import DifferenceField
from .environment import EnvironmentField, Kind, SitePoint
from .errors import CapabilityError, DomainError, InconsistencyError, ParameterError, TruncationError
from .instability import InstabilityGraph, Island, default_tol_flat
from .lpp import NEG_INF, Geodesic, GeodesicTracer, PassageField, Side, Sign, backward_step, suffix_max


def _require_semidiscrete(env: EnvironmentField) -> None:
    if env.kind is not Kind.SEMI_DISCRETE:
        raise CapabilityError("shock features need the semi-discrete backend; the discrete model has no shocks")


# ---------------------------------------------------------------------------
# competition functions


def _entry_rows(env: EnvironmentField, pf: PassageField, anchor_value: float, a: int, t: int
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boundary ``f`` on level ``t`` and the two constrained entry rows."""
    b = env.paths[t]
    f = pf.values[t] - anchor_value
    score = b + f
    m = b.shape[0]
    right = np.full(m, NEG_INF)
    sm = suffix_max(score)
    idx = np.maximum(np.arange(m), a)
    right[:] = sm[idx] - b
    left = np.full(m, NEG_INF)
    left[: a + 1] = suffix_max(score[: a + 1]) - b[: a + 1]
    return f, right, left


def _difference(right: np.ndarray, left: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        d = right - left
    d[np.isnan(d)] = np.inf
    return d


def _sweep(env: EnvironmentField, right: np.ndarray, left: np.ndarray, t: int, stop: int
           ) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
    """Yield ``(r, right_r, left_r)`` for ``r = t-1`` down to ``stop``."""
    paths = env.paths
    for r in range(t - 1, stop - 1, -1):
        right = backward_step(paths[r], right)
        left = backward_step(paths[r], left)
        yield r, right, left


@dataclass(frozen=True, eq=False)
class CompetitionField:
    """``d(x, r)`` for levels ``stop <= r < t`` plus the same-level row ``at_reference``.

    ``d`` is ``+inf`` where only the right-hand targets are reachable.
    """

    reference: SitePoint
    sign: Sign
    boundary: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)
    at_reference: np.ndarray = field(repr=False)
    stop: int
    scale: float

    def value(self, x: int, r: int) -> float:
        if r >= self.reference.level:
            raise ParameterError("competition values live strictly below the reference level")
        if r < self.stop:
            raise ParameterError(f"level {r} was not computed (stop={self.stop})")
        return float(self.d[r, x])

    @property
    def levels(self) -> range:
        return range(self.stop, self.reference.level)


def competition_field(env: EnvironmentField, df: DifferenceField, reference: SitePoint, sign: Sign,
                      stop: int = 0) -> CompetitionField:
    """``d(x,r) = max_{y>=a}[L(x,r -> y,t) + f(y)] - max_{y<=a}[L(x,r -> y,t) + f(y)]``.

    The boundary is ``f(y) = W^sign((y, t); anchor)``. The two maxima come from
    backward sweeps started on level ``t`` from entry rows restricted to the
    right and left of ``a``.
    """
    _require_semidiscrete(env)
    sign = Sign(sign)
    pf = df.field_for(sign)
    t, a = reference.level, reference.x
    if not 0 <= t < env.n_levels - 1:
        raise ParameterError("reference level must lie below the top level")
    if not 0 <= a < env.width:
        raise ParameterError("reference column out of range")
    if not 0 <= stop <= t:
        raise ParameterError("need 0 <= stop <= reference level")
    f, right, left = _entry_rows(env, pf, pf.value(df.anchor), a, t)
    d = np.full(env.shape, np.nan)
    for r, rr, ll in _sweep(env, right, left, t, stop):
        d[r] = _difference(rr, ll)
    finite = np.abs(right[np.isfinite(right)])
    scale = 1e-9 * (1.0 + (float(finite.max()) if finite.size else 0.0))
    return CompetitionField(reference, sign, f, d, _difference(right, left), stop, scale)


@dataclass(frozen=True)
class ShockInterface:
    """Mesh positions of a shock interface on levels ``levels`` (descending).

    ``xs[i]`` is a site; a left interface sits on the dual edge ``(x-1, x)`` and
    a right interface on ``(x, x+1)``.
    """

    sign: Sign
    side: Side
    start: SitePoint
    levels: np.ndarray
    xs: np.ndarray
    max_jump: int

    def dual_edges(self) -> list[tuple[int, int]]:
        """``(level, left cell)`` of the dual edge the interface crosses on each level."""
        off = -1 if self.side is Side.LEFTMOST else 0
        return [(int(k), int(x) + off) for k, x in zip(self.levels, self.xs)]

    def inside(self, width: int) -> np.ndarray:
        """Mask of levels where the interface lies strictly inside ``0..width-1``."""
        return (self.xs > 0) & (self.xs < width - 1)

    def position(self, level: int) -> int:
        i = int(np.flatnonzero(self.levels == level)[0])
        return int(self.xs[i])


def _crossings(row: np.ndarray, tol: float) -> tuple[int, int]:
    """``(min{x: d >= 0}, max{x: d <= 0})`` at tolerance ``tol``."""
    ge = np.flatnonzero(row >= -tol)
    le = np.flatnonzero(row <= tol)
    lo = int(ge[0]) if ge.size else row.size
    hi = int(le[-1]) if le.size else -1
    return lo, hi


def shock_interfaces_from_point(cf: CompetitionField, tol: float | None = None
                                ) -> tuple[ShockInterface, ShockInterface]:
    """Left and right interfaces: first site with ``d >= 0`` and last with ``d <= 0`` per level."""
    tol = cf.scale if tol is None else tol
    lv = np.arange(cf.reference.level - 1, cf.stop - 1, -1)
    lo = np.empty(lv.size, dtype=np.int64)
    hi = np.empty(lv.size, dtype=np.int64)
    for i, r in enumerate(lv):
        row = cf.d[r]
        fin = row[np.isfinite(row)]
        if fin.size > 1 and np.min(np.diff(fin)) < -tol:
            raise DomainError(f"competition function not monotone on level {r}")
        lo[i], hi[i] = _crossings(row, tol)
    jl = int(np.max(np.abs(np.diff(lo)))) if lo.size > 1 else 0
    jr = int(np.max(np.abs(np.diff(hi)))) if hi.size > 1 else 0
    return (ShockInterface(cf.sign, Side.LEFTMOST, cf.reference, lv, lo, jl),
            ShockInterface(cf.sign, Side.RIGHTMOST, cf.reference, lv, hi, jr))


# ---------------------------------------------------------------------------
# paths, meeting levels and shocks


@dataclass(frozen=True)
class TracedPath:
    """A geodesic as entry/exit arrays from its origin level up to the target."""

    origin: SitePoint
    entries: np.ndarray
    exits: np.ndarray
    side: Side

    def geodesic(self) -> Geodesic:
        k = self.origin.level
        return Geodesic(tuple((k + j, int(a), int(b)) for j, (a, b) in enumerate(zip(self.entries, self.exits))),
                        self.side)


def meet_offset(a: TracedPath, b: TracedPath, pivot: int | None = None) -> int | None:
    """First level offset where the two runs overlap, or ``None``.

    Paths from the same site count as overlapping on the origin level only if
    they leave it at the same place or both move right of ``pivot`` (the
    origin by default).
    """
    if a.origin.level != b.origin.level:
        raise ParameterError("paths must start on the same level")
    n = min(a.entries.size, b.entries.size)
    ok = np.maximum(a.entries[:n], b.entries[:n]) <= np.minimum(a.exits[:n], b.exits[:n])
    if a.origin.x == b.origin.x and n:
        x0 = a.origin.x if pivot is None else max(pivot, a.origin.x)
        ea, eb = int(a.exits[0]), int(b.exits[0])
        ok[0] = ea == eb or (ea > x0 and eb > x0)
    hit = np.flatnonzero(ok)
    return int(hit[0]) if hit.size else None


def precedes(a: TracedPath, b: TracedPath) -> bool:
    """``a`` weakly left of ``b`` on every common level."""
    n = min(a.entries.size, b.entries.size)
    return bool(np.all(a.entries[:n] <= b.entries[:n]) and np.all(a.exits[:n] <= b.exits[:n]))


class Tracers:
    """Leftmost and rightmost tracers for one passage field, shared across queries."""

    def __init__(self, pf: PassageField, tol_tie: float = 1e-9):
        _require_semidiscrete(pf.env)
        self.pf = pf
        self.left = GeodesicTracer(pf, Side.LEFTMOST, tol_tie)
        self.right = GeodesicTracer(pf, Side.RIGHTMOST, tol_tie)

    def path(self, v: SitePoint, side: Side) -> TracedPath:
        tr = self.left if Side(side) is Side.LEFTMOST else self.right
        ent, ext = tr.trace(v)
        return TracedPath(v, ent, ext, tr.side)

    def stencil(self, v: SitePoint) -> tuple[TracedPath, TracedPath, TracedPath]:
        """``(L, M, R)`` at ``v``; a missing neighbour falls back to ``v`` itself."""
        if not self.pf.reachable(v):
            raise DomainError(f"{v} cannot reach the target")
        lv = SitePoint(v.level, v.x - 1)
        rv = SitePoint(v.level, v.x + 1)
        lp = self.path(lv if self.pf.reachable(lv) else v, Side.LEFTMOST)
        mp = self.path(v, Side.LEFTMOST)
        rp = self.path(rv if self.pf.reachable(rv) else v, Side.RIGHTMOST)
        return lp, mp, rp


def detect_shock(pf: PassageField, v: SitePoint, tol_tie: float = 1e-9, tracers: Tracers | None = None
                 ) -> int | None:
    """Shock age at ``v``: levels until the left and right limits meet again.

    ``None`` when they already share a site on the origin level.
    """
    tracers = tracers if tracers is not None else Tracers(pf, tol_tie)
    lp, _, rp = tracers.stencil(v)
    m = meet_offset(lp, rp)
    if m == 0:
        return None
    return m if m is not None else pf.target.level - v.level + 1


# ---------------------------------------------------------------------------
# bundles and the taxonomy

SLOTS = ("L-", "M-", "R-", "L+", "M+", "R+")


@dataclass(frozen=True, eq=False)
class GeodesicBundle:
    """The six geodesics out of ``origin`` and their pairwise meeting offsets.

    ``no_sign`` bundles use one passage field for both signs.
    """

    origin: SitePoint
    paths: dict[str, TracedPath]
    no_sign: bool = False
    meets: dict[tuple[str, str], int | None] = field(default_factory=dict)

    def meet(self, a: str, b: str) -> int | None:
        """Meeting offset; a shared stretch on the origin level must reach past the origin site."""
        key = (a, b) if (a, b) in self.meets else (b, a)
        if key not in self.meets:
            self.meets[key] = meet_offset(self.paths[key[0]], self.paths[key[1]], self.origin.x)
        return self.meets[key]

    def geodesic(self, slot: str) -> Geodesic:
        return self.paths[slot].geodesic()


class BundleFactory:
    """Builds bundles for many origins with shared memoized tracers."""

    def __init__(self, minus: PassageField, plus: PassageField | None = None, tol_tie: float = 1e-9):
        self.minus = Tracers(minus, tol_tie)
        self.no_sign = plus is None or plus is minus
        self.plus = self.minus if self.no_sign else Tracers(plus, tol_tie)

    @classmethod
    def from_field(cls, df: DifferenceField, tol_tie: float = 1e-9) -> "BundleFactory":
        return cls(df.pf_minus, df.pf_plus, tol_tie)

    def bundle(self, v: SitePoint) -> GeodesicBundle:
        lm, mm, rm = self.minus.stencil(v)
        lp, mp, rp = (lm, mm, rm) if self.no_sign else self.plus.stencil(v)
        paths = dict(zip(SLOTS, (lm, mm, rm, lp, mp, rp)))
        return GeodesicBundle(v, paths, self.no_sign)


def build_bundle(df: DifferenceField, v: SitePoint, tol_tie: float = 1e-9) -> GeodesicBundle:
    return BundleFactory.from_field(df, tol_tie).bundle(v)


class Group(str, enum.Enum):
    STABLE_NO_SIGN = "StableNoSign"
    STABLE_SIGNED = "StableSigned"
    DUST = "Dust"
    HUG_PLUS = "HugPlus"
    HUG_MINUS = "HugMinus"


class Special(str, enum.Enum):
    PNS = "pns"
    SNOWBIRD = "snowbird"
    SINGLE_MINUS = "single_minus"
    SINGLE_PLUS = "single_plus"
    HUGGING_MINUS = "hugging_minus"
    HUGGING_PLUS = "hugging_plus"
    PROPER_DOUBLE = "proper_double"
    NONE = "none"


# class id -> (group, special, minus_shock, plus_shock, description)
CLASS_TABLE: dict[int, tuple[Group, Special, bool, bool, str]] = {
    1: (Group.STABLE_NO_SIGN, Special.NONE, False, False, "no shock"),
    2: (Group.STABLE_NO_SIGN, Special.PROPER_DOUBLE, True, True, "shock, no middle"),
    3: (Group.STABLE_NO_SIGN, Special.PROPER_DOUBLE, True, True, "shock, middle joins left first"),
    4: (Group.STABLE_NO_SIGN, Special.PROPER_DOUBLE, True, True, "shock, middle joins right first"),
    5: (Group.STABLE_SIGNED, Special.NONE, False, False, "no shock"),
    6: (Group.STABLE_SIGNED, Special.PROPER_DOUBLE, True, True, "proper double, no middle"),
    7: (Group.STABLE_SIGNED, Special.PROPER_DOUBLE, True, True, "proper double, middle joins left first"),
    8: (Group.STABLE_SIGNED, Special.PROPER_DOUBLE, True, True, "proper double, middle joins right first"),
    9: (Group.DUST, Special.PNS, False, False, "proper non-shock instability"),
    10: (Group.DUST, Special.SINGLE_PLUS, False, True, "single plus shock"),
    11: (Group.DUST, Special.SINGLE_MINUS, True, False, "single minus shock"),
    12: (Group.DUST, Special.SNOWBIRD, True, True, "snowbird"),
    13: (Group.HUG_PLUS, Special.HUGGING_PLUS, False, True, "no middle"),
    14: (Group.HUG_PLUS, Special.HUGGING_PLUS, False, True, "middle joins left first"),
    15: (Group.HUG_PLUS, Special.HUGGING_PLUS, False, True, "middle joins right first"),
    16: (Group.HUG_PLUS, Special.HUGGING_PLUS, True, True, "improper double"),
    17: (Group.HUG_MINUS, Special.HUGGING_MINUS, True, False, "no middle"),
    18: (Group.HUG_MINUS, Special.HUGGING_MINUS, True, False, "middle joins right first"),
    19: (Group.HUG_MINUS, Special.HUGGING_MINUS, True, False, "middle joins left first"),
    20: (Group.HUG_MINUS, Special.HUGGING_MINUS, True, True, "improper double"),
}


@dataclass(frozen=True)
class ConfigClass:
    class_id: int
    group: Group
    special: Special
    minus_shock: bool
    plus_shock: bool
    unstable: bool
    borderline: bool = False
    double_hugging: bool = False
    graph_agrees: bool | None = None

    @classmethod
    def of(cls, class_id: int, unstable: bool, borderline: bool = False, double_hugging: bool = False,
           graph_agrees: bool | None = None) -> "ConfigClass":
        group, special, ms, ps, _ = CLASS_TABLE[class_id]
        return cls(class_id, group, special, ms, ps, unstable, borderline, double_hugging, graph_agrees)


class _Resolver:
    """Coincidence at a resolution of ``resolution`` levels, tracking borderline calls."""

    def __init__(self, bundle: GeodesicBundle, resolution: int):
        self.b = bundle
        self.res = resolution
        self.borderline = False

    def co(self, a: str, b: str) -> bool:
        m = self.b.meet(a, b)
        if m is None or m > self.res:
            return False
        if m > 0:
            self.borderline = True
        return True

    def first_join(self, mid: str, left: str, right: str) -> str | None:
        """Which side the middle path meets first, ``None`` on a tie."""
        ml, mr = self.b.meet(mid, left), self.b.meet(mid, right)
        ml = np.inf if ml is None else ml
        mr = np.inf if mr is None else mr
        if ml == mr:
            self.borderline = True
            return None
        return "L" if ml < mr else "R"


def _check_order(bundle: GeodesicBundle) -> None:
    p = bundle.paths
    chains = [("L-", "M-"), ("M-", "R-"), ("L+", "M+"), ("M+", "R+")]
    if not bundle.no_sign:
        chains += [("L-", "L+"), ("M-", "M+"), ("R-", "R+")]
    for a, b in chains:
        if not precedes(p[a], p[b]):
            raise InconsistencyError(f"bundle at {bundle.origin} violates {a} <= {b}")


def classify_configuration(bundle: GeodesicBundle, graph: InstabilityGraph | None = None,
                           resolution: int = 1) -> ConfigClass:
    """Place the bundle in one of the twenty configurations.

    Pairs meeting within ``resolution`` levels count as coinciding; a pair that
    meets after a positive offset within that window sets the borderline flag.
    Combinations outside the taxonomy resolve to the coarser class with the
    borderline flag set.
    """
    _check_order(bundle)
    rs = _Resolver(bundle, resolution)
    # identical minus and plus paths carry no sign information
    no_sign = bundle.no_sign or all(_same_path(bundle.paths[s + "-"], bundle.paths[s + "+"]) for s in "LMR")
    unstable = (not no_sign) and bundle.meet("L-", "R+") is None
    agrees = None if graph is None else graph.contains(bundle.origin) == unstable

    def done(cid: int, double: bool = False) -> ConfigClass:
        return ConfigClass.of(cid, unstable, rs.borderline, double, agrees)

    def middle(sign: str) -> str | None:
        m, l, r = "M" + sign, "L" + sign, "R" + sign
        if rs.co(m, l) or rs.co(m, r):
            return None
        return rs.first_join(m, l, r)

    if no_sign:
        if rs.co("L-", "R-"):
            return done(1)
        side = middle("-")
        return done({None: 2, "L": 3, "R": 4}[side])

    minus_shock = not rs.co("L-", "R-")
    plus_shock = not rs.co("L+", "R+")
    if not unstable:
        if not minus_shock and not plus_shock:
            return done(5)
        if minus_shock != plus_shock:
            rs.borderline = True
            return done(5)
        side = middle("-") or middle("+")
        return done({None: 6, "L": 7, "R": 8}[side])

    hug_plus = rs.co("L-", "L+")
    hug_minus = rs.co("R-", "R+")
    double = hug_plus and hug_minus
    if double:
        rs.borderline = True
        # keep the pair that stays together longer
        hug_plus = _shared_levels(bundle, "L-", "L+") >= _shared_levels(bundle, "R-", "R+")
        hug_minus = not hug_plus
    if hug_plus:
        if minus_shock:
            return done(16, double)
        side = middle("+")
        return done({None: 13, "L": 14, "R": 15}[side], double)
    if hug_minus:
        if plus_shock:
            return done(20, double)
        side = middle("-")
        return done({None: 17, "R": 18, "L": 19}[side], double)
    if not minus_shock and not plus_shock:
        return done(9)
    if plus_shock and not minus_shock:
        return done(10)
    if minus_shock and not plus_shock:
        return done(11)
    if rs.co("R-", "L+"):
        return done(12)
    # both signs shocked without the snowbird pairing: keep the older shock
    rs.borderline = True
    am = bundle.meet("L-", "R-")
    ap = bundle.meet("L+", "R+")
    am = np.inf if am is None else am
    ap = np.inf if ap is None else ap
    return done(11 if am >= ap else 10)


def _same_path(a: TracedPath, b: TracedPath) -> bool:
    return a.origin == b.origin and np.array_equal(a.entries, b.entries) and np.array_equal(a.exits, b.exits)


def _shared_levels(bundle: GeodesicBundle, a: str, b: str) -> int:
    """Number of levels over which two same-origin paths follow the same runs."""
    pa, pb = bundle.paths[a], bundle.paths[b]
    n = min(pa.entries.size, pb.entries.size)
    same = (pa.entries[:n] == pb.entries[:n]) & (pa.exits[:n] == pb.exits[:n])
    diff = np.flatnonzero(~same)
    return int(diff[0]) if diff.size else n


# ---------------------------------------------------------------------------
# islands from tips


def is_instability_point(df: DifferenceField, v: SitePoint, tol_flat: float) -> bool:
    w = df.valid_width
    row = df.D[v.level, :w]
    lo = row[max(v.x - 1, 0)]
    hi = row[min(v.x + 1, w - 1)]
    return bool(lo - hi > tol_flat)


def reconstruct_island_from_tip(tip: SitePoint, env: EnvironmentField, df: DifferenceField,
                                tol_flat: float | None = None, min_interior: int = 1) -> Island | None:
    """Island bounded by the left minus and right plus interfaces launched from ``tip``.

    On every level from the tip downwards the cells between
    ``Upsilon^{L,-}`` and ``Upsilon^{R,+}`` belong to the island while the two
    interfaces are misordered (minus not right of plus). Returns ``None`` when
    the region is the tip alone or has no stable cell.
    """
    _require_semidiscrete(env)
    tol_flat = default_tol_flat(df) if tol_flat is None else tol_flat
    w = df.valid_width
    if not (0 <= tip.x < w and 0 <= tip.level < env.n_levels):
        raise DomainError(f"{tip} is outside the difference field")
    if not is_instability_point(df, tip, tol_flat):
        raise DomainError(f"{tip} is not an instability point")
    t, a = tip.level, tip.x
    if t >= env.n_levels - 1:
        raise TruncationError("tip on the top level")
    _, rm, lm = _entry_rows(env, df.pf_minus, df.pf_minus.value(df.anchor), a, t)
    _, rp, lp = _entry_rows(env, df.pf_plus, df.pf_plus.value(df.anchor), a, t)
    tol = 1e-9 * (1.0 + float(np.max(np.abs(rm[np.isfinite(rm)]))))

    def bounds(rm_, lm_, rp_, lp_):
        lo, _ = _crossings(_difference(rm_, lm_)[:w], tol)
        _, hi = _crossings(_difference(rp_, lp_)[:w], tol)
        return lo, hi

    levels, left, right = [], [], []
    lo, hi = bounds(rm, lm, rp, lp)
    r = t
    paths = env.paths
    while lo <= hi:
        if lo <= 0 or hi >= w - 1:
            raise TruncationError(f"interfaces from {tip} leave the window on level {r}")
        levels.append(r)
        left.append(lo)
        right.append(hi)
        r -= 1
        if r < 0:
            raise TruncationError(f"interfaces from {tip} do not meet above level 0")
        rm, lm = backward_step(paths[r], rm), backward_step(paths[r], lm)
        rp, lp = backward_step(paths[r], rp), backward_step(paths[r], lp)
        lo, hi = bounds(rm, lm, rp, lp)
    if not levels or (len(levels) == 1 and left[0] == right[0]):
        return None
    isl = Island(tuple(levels[::-1]), tuple(left[::-1]), tuple(right[::-1]))
    if isl.n_interior < min_interior:
        return None
    return isl
