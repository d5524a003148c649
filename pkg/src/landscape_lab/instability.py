"""Instability graph, interfaces, stability islands and box-counting dimension.

The instability graph on a level is the set of points of increase of the
profile ``x -> D0 - D(x)``. At mesh resolution a point is a point of increase
when the profile is strictly larger one cell to the right than one cell to
the left. Constant-``D`` components that contain a stable cell are the
stability islands; their run endpoints are instability points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .busemann import DifferenceField
from .environment import SitePoint
from .errors import DomainError, ParameterError


class Side(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


class PointRole(str, enum.Enum):
    TIP = "tip"
    BOTTOM = "bottom"
    LEFT = "left_boundary"
    RIGHT = "right_boundary"
    PINCH = "pinch"
    DUST = "dust"
    TRUNCATED = "truncated"


def default_tol_flat(df: DifferenceField) -> float:
    """Ten times ``tol_eq`` at the largest passage value in the field."""
    g = df.pf_minus.values[:, : df.valid_width]
    return 10 * 1e-9 * (1.0 + float(np.nanmax(np.abs(g[np.isfinite(g)]))))


@dataclass(frozen=True)
class LevelProfile:
    """Nondecreasing profile ``f`` sampled at sorted coordinates ``xs``."""

    level: int
    xs: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        if len(self.xs) != len(self.f):
            raise ParameterError("xs and f must have the same length")

    @classmethod
    def from_field(cls, df: DifferenceField, level: int) -> "LevelProfile":
        w = df.valid_width
        return cls(level, np.arange(w), df.profile_values(level))

    def check_monotone(self, tol: float | None = None) -> None:
        f = np.asarray(self.f, float)
        if f.size < 2:
            return
        tol = 1e-9 * (1.0 + float(np.max(np.abs(f)))) if tol is None else tol
        if np.min(np.diff(f)) < -tol:
            raise DomainError(f"profile on level {self.level} decreases beyond tolerance")


def points_of_increase(p: LevelProfile, tol_flat: float, closure: bool = False) -> np.ndarray:
    """Indices ``i`` with ``f(i-1) < f(i+1) - tol_flat``.

    At the ends the missing neighbour is replaced by the point itself. With
    ``closure=True`` a point whose two neighbours are both points of increase
    is added as well.
    """
    p.check_monotone()
    f = np.asarray(p.f, float)
    n = f.size
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    if n == 1:
        return np.zeros(0, dtype=np.int64)
    left = np.r_[f[0], f[:-1]]
    right = np.r_[f[1:], f[-1]]
    inc = left < right - tol_flat
    if closure:
        both = np.zeros(n, dtype=bool)
        both[1:-1] = inc[:-2] & inc[2:]
        inc = inc | both
    return np.flatnonzero(inc)


def isolation_test(p: LevelProfile, i: int, side: Side, tol_flat: float) -> bool:
    """Whether point of increase ``i`` has a flat neighbour on ``side``.

    Right-isolated: some sample strictly to the right has ``f`` within
    ``tol_flat`` of ``f(i)``; since ``f`` is nondecreasing it is enough to look
    at the nearest one. Left is symmetric.
    """
    side = Side(side)
    pts = points_of_increase(p, tol_flat)
    if i not in set(pts.tolist()):
        raise DomainError(f"index {i} is not a point of increase")
    f = p.f
    j = i + 1 if side is Side.RIGHT else i - 1
    if not 0 <= j < len(f):
        return False
    return abs(f[j] - f[i]) <= tol_flat


@dataclass(frozen=True)
class PsiPaths:
    """Per-level interface positions around an anchor's constant-``D`` set.

    ``minus[t]`` is the last column with ``D > D0 + tol`` (``-1`` if none) and
    ``plus[t]`` the first column with ``D < D0 - tol`` (``width`` if none).
    ``defined[t]`` is false when neither exists.
    """

    levels: np.ndarray
    minus: np.ndarray
    plus: np.ndarray
    defined: np.ndarray
    width: int


def interfaces_from_anchor(df: DifferenceField, tol_flat: float, anchor: SitePoint | None = None,
                           levels: Sequence[int] | None = None) -> PsiPaths:
    anchor = df.anchor if anchor is None else anchor
    w = df.valid_width
    d0 = float(df.D[anchor.level, anchor.x])
    levels = np.arange(df.n_levels) if levels is None else np.asarray(levels, dtype=np.int64)
    minus = np.empty(len(levels), dtype=np.int64)
    plus = np.empty(len(levels), dtype=np.int64)
    for j, t in enumerate(levels):
        neg = -df.D[t, :w]  # nondecreasing
        # first index with D < d0 - tol  <=>  -D > -d0 + tol
        plus[j] = int(np.searchsorted(neg, -d0 + tol_flat, side="right"))
        # last index with D > d0 + tol  <=>  -D < -d0 - tol
        minus[j] = int(np.searchsorted(neg, -d0 - tol_flat, side="left")) - 1
    defined = (minus >= 0) | (plus < w)
    return PsiPaths(levels, minus, plus, defined, w)


@dataclass(frozen=True)
class Island:
    """A stability island as per-level runs ``[left(t), right(t)]`` of cells.

    Boundaries are the instability cells at the run ends. The tip is the right
    end of the top run and the bottom is the left end of the lowest run.
    """

    levels: tuple[int, ...]
    left: tuple[int, ...]
    right: tuple[int, ...]

    @property
    def tip(self) -> SitePoint:
        return SitePoint(self.levels[-1], self.right[-1])

    @property
    def bottom(self) -> SitePoint:
        return SitePoint(self.levels[0], self.left[0])

    @property
    def lifetime(self) -> int:
        return len(self.levels)

    @property
    def n_cells(self) -> int:
        return int(sum(r - l + 1 for l, r in zip(self.left, self.right)))

    @property
    def n_interior(self) -> int:
        return int(sum(max(0, r - l - 1) for l, r in zip(self.left, self.right)))

    def cells(self) -> set[tuple[int, int]]:
        return {(t, x) for t, l, r in zip(self.levels, self.left, self.right) for x in range(l, r + 1)}

    def run_at(self, level: int) -> tuple[int, int] | None:
        i = level - self.levels[0]
        if 0 <= i < len(self.levels):
            return self.left[i], self.right[i]
        return None

    def roles(self) -> dict[tuple[int, int], PointRole]:
        """Role of every boundary cell; each cell gets exactly one role."""
        out: dict[tuple[int, int], PointRole] = {}
        top, bot = self.tip, self.bottom
        for t, l, r in zip(self.levels, self.left, self.right):
            for x in {l, r}:
                if (t, x) == (top.level, top.x):
                    role = PointRole.TIP
                elif (t, x) == (bot.level, bot.x):
                    role = PointRole.BOTTOM
                elif l == r:
                    role = PointRole.PINCH
                elif x == l:
                    role = PointRole.LEFT
                else:
                    role = PointRole.RIGHT
                out[(t, x)] = role
        return out

    def strict_violations(self) -> int:
        """Levels other than tip and bottom where the two boundaries touch."""
        return sum(1 for l, r in zip(self.left[1:-1], self.right[1:-1]) if l >= r)

    def to_json(self) -> dict:
        return {
            "tip": {"level": self.tip.level, "x": self.tip.x},
            "bottom": {"level": self.bottom.level, "x": self.bottom.x},
            "levels": list(self.levels),
            "left": list(self.left),
            "right": list(self.right),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Island":
        return cls(tuple(doc["levels"]), tuple(doc["left"]), tuple(doc["right"]))


@dataclass
class IslandExtraction:
    islands: list[Island]
    truncated: list[Island]
    strands: list[Island]


def extract_islands(psi_minus: Sequence[int], psi_plus: Sequence[int], levels: Sequence[int] | None = None,
                    width: int | None = None, min_interior: int = 1) -> IslandExtraction:
    """Islands from a pair of level-aligned interface paths.

    Cells strictly between ``psi_minus(t)`` and ``psi_plus(t)`` form the
    candidate region. Interface equality at mesh resolution means no cell lies
    between them. Maximal level-intervals with a nonempty region that are
    closed off by equality on both sides become islands when they contain at
    least ``min_interior`` stable cells (a cell with a region cell on both
    sides). Intervals reaching the first or last level, or touching the
    spatial window ``[0, width)``, are returned as truncated. Intervals
    without interior are thin strands of the instability graph.
    """
    lo = np.asarray(psi_minus, dtype=np.int64)
    hi = np.asarray(psi_plus, dtype=np.int64)
    if lo.shape != hi.shape:
        raise ParameterError("interface paths must be level-aligned")
    lv = np.arange(lo.size) if levels is None else np.asarray(levels, dtype=np.int64)
    if np.any(hi < lo):
        raise ParameterError("need psi_minus <= psi_plus")
    gap = hi - lo - 1
    out = IslandExtraction([], [], [])
    n = gap.size
    i = 0
    while i < n:
        if gap[i] <= 0:
            i += 1
            continue
        j = i
        while j + 1 < n and gap[j + 1] > 0:
            j += 1
        left = tuple(int(v) + 1 for v in lo[i: j + 1])
        right = tuple(int(v) - 1 for v in hi[i: j + 1])
        isl = Island(tuple(int(t) for t in lv[i: j + 1]), left, right)
        touches = i == 0 or j == n - 1
        if width is not None:
            touches = touches or min(left) <= 0 or max(right) >= width - 1
        if touches:
            out.truncated.append(isl)
        elif isl.n_interior >= min_interior:
            out.islands.append(isl)
        else:
            out.strands.append(isl)
        i = j + 1
    return out


@dataclass
class Component:
    """A constant-``D`` component: one run per consecutive level."""

    value: float
    levels: list[int] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)


def level_runs(row: np.ndarray, tol_flat: float) -> tuple[np.ndarray, np.ndarray]:
    """Maximal runs of cells with equal ``D`` (within ``tol_flat``) on one level."""
    jumps = np.flatnonzero(row[:-1] - row[1:] > tol_flat)
    starts = np.r_[0, jumps + 1]
    ends = np.r_[jumps, row.size - 1]
    return starts, ends


def constant_components(df: DifferenceField, tol_flat: float) -> list[Component]:
    """Link runs of equal ``D`` on consecutive levels into components.

    Two runs on adjacent levels join when their ``D`` values agree within
    ``tol_flat`` and their column ranges overlap.
    """
    w = df.valid_width
    comps: list[Component] = []
    prev: list[tuple[int, int, float, int]] = []
    for k in range(df.n_levels):
        row = df.D[k, :w]
        starts, ends = level_runs(row, tol_flat)
        vals = row[starts]
        cur = []
        j = 0
        for s, e, v in zip(starts.tolist(), ends.tolist(), vals.tolist()):
            cid = -1
            while j < len(prev) and prev[j][1] < s:
                j += 1
            jj = j
            while jj < len(prev) and prev[jj][0] <= e:
                ps, pe, pv, pc = prev[jj]
                if abs(pv - v) <= tol_flat:
                    cid = pc
                    break
                jj += 1
            if cid < 0:
                cid = len(comps)
                comps.append(Component(v))
            c = comps[cid]
            if c.levels and c.levels[-1] == k:
                # a second run of the same value on one level cannot occur for
                # a monotone row; keep the first
                continue
            c.levels.append(k)
            c.left.append(s)
            c.right.append(e)
            cur.append((s, e, v, cid))
        prev = cur
    return comps


@dataclass
class InstabilityGraph:
    """Per-level instability points plus the island catalogue."""

    tol_flat: float
    points: list[np.ndarray]
    islands: list[Island]
    truncated: list[Island]
    strands: list[Island]
    width: int
    psi: PsiPaths | None = None

    def contains(self, v: SitePoint) -> bool:
        pts = self.points[v.level]
        i = np.searchsorted(pts, v.x)
        return bool(i < pts.size and pts[i] == v.x)

    @property
    def n_points(self) -> int:
        return int(sum(p.size for p in self.points))

    def roles(self) -> dict[tuple[int, int], PointRole]:
        """Role of each instability point; points on no complete island are dust."""
        out: dict[tuple[int, int], PointRole] = {}
        for isl in self.truncated:
            for key in isl.roles():
                out[key] = PointRole.TRUNCATED
        for isl in self.islands:
            out.update(isl.roles())
        for k, pts in enumerate(self.points):
            for x in pts.tolist():
                out.setdefault((k, x), PointRole.DUST)
        return out

    def island_of(self) -> dict[tuple[int, int], int]:
        """Map from island cell to island index."""
        owner = {}
        for i, isl in enumerate(self.islands):
            for c in isl.cells():
                owner[c] = i
        return owner

    def to_json(self, dims: list[dict] | None = None) -> dict:
        return {
            "format_version": 1,
            "tol_flat": self.tol_flat,
            "width": self.width,
            "levels": [{"t": k, "points": p.tolist()} for k, p in enumerate(self.points)],
            "islands": [isl.to_json() for isl in self.islands],
            "truncated": [isl.to_json() for isl in self.truncated],
            "strands": [isl.to_json() for isl in self.strands],
            "psi": None if self.psi is None else {
                "levels": self.psi.levels.tolist(),
                "minus": self.psi.minus.tolist(),
                "plus": self.psi.plus.tolist(),
            },
            "dims": dims or [],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "InstabilityGraph":
        points = [np.asarray(lv["points"], dtype=np.int64) for lv in sorted(doc["levels"], key=lambda d: d["t"])]
        psi = None
        if doc.get("psi") is not None:
            lv = np.asarray(doc["psi"]["levels"], dtype=np.int64)
            mi = np.asarray(doc["psi"]["minus"], dtype=np.int64)
            pl = np.asarray(doc["psi"]["plus"], dtype=np.int64)
            psi = PsiPaths(lv, mi, pl, (mi >= 0) | (pl < doc["width"]), doc["width"])
        return cls(doc["tol_flat"], points, [Island.from_json(d) for d in doc["islands"]],
                   [Island.from_json(d) for d in doc["truncated"]], [Island.from_json(d) for d in doc["strands"]],
                   doc["width"], psi)


def build_instability_graph(df: DifferenceField, tol_flat: float | None = None) -> InstabilityGraph:
    """Instability points on every level and the island catalogue.

    Each constant-``D`` component is anchored at one of its cells and passed
    through :func:`interfaces_from_anchor` and :func:`extract_islands` on the
    levels it spans plus one level on each side.
    """
    tol_flat = default_tol_flat(df) if tol_flat is None else tol_flat
    w = df.valid_width
    points = [points_of_increase(LevelProfile.from_field(df, k), tol_flat) for k in range(df.n_levels)]
    islands: list[Island] = []
    truncated: list[Island] = []
    strands: list[Island] = []
    top = df.n_levels - 1
    for comp in constant_components(df, tol_flat):
        widest = max(r - l for l, r in zip(comp.left, comp.right))
        k1, k2 = comp.levels[0], comp.levels[-1]
        if widest < 2 and 0 < k1 and k2 < top and min(comp.left) > 0 and max(comp.right) < w - 1:
            strands.append(Island(tuple(comp.levels), tuple(comp.left), tuple(comp.right)))
            continue
        lv = np.arange(max(k1 - 1, 0), min(k2 + 1, top) + 1)
        anchor = SitePoint(k1, comp.left[0])
        psi = interfaces_from_anchor(df, tol_flat, anchor, lv)
        ex = extract_islands(psi.minus, psi.plus, lv, width=w)
        if k1 == 0 or k2 == top:
            # the run touches the first or last simulated level
            truncated.extend(ex.islands + ex.truncated)
            continue
        islands.extend(ex.islands)
        truncated.extend(ex.truncated)
        strands.extend(ex.strands)
    islands.sort(key=lambda i: (i.levels[0], i.left[0]))
    return InstabilityGraph(tol_flat, points, islands, truncated, strands, w,
                            interfaces_from_anchor(df, tol_flat))


def box_counts(points: np.ndarray, scales: Sequence[float], origin: float | None = None) -> np.ndarray:
    pts = np.asarray(points, float)
    origin = float(pts.min()) if origin is None else origin
    return np.array([np.unique(np.floor((pts - origin) / e)).size for e in scales], dtype=np.int64)


def dyadic_scales(mesh: float, domain: float) -> list[float]:
    """Dyadic ``2^-k`` in ``[4 mesh, domain / 8]``, largest first."""
    lo, hi = 4.0 * mesh, domain / 8.0
    if hi < lo:
        return []
    k_min = int(np.ceil(-np.log2(hi)))
    out = []
    k = k_min
    while 2.0 ** -k >= lo:
        if 2.0 ** -k <= hi:
            out.append(2.0 ** -k)
        k += 1
    return out


def box_dimension(points: Sequence[float], scales: Sequence[float], mesh: float | None = None,
                  min_points: int = 200, min_span_cells: int = 100) -> float:
    """Least-squares slope of ``log N(eps)`` against ``log(1/eps)``."""
    pts = np.sort(np.asarray(points, float))
    if pts.size < min_points:
        raise DomainError(f"need at least {min_points} points, got {pts.size}")
    if mesh is not None and pts.size and (pts[-1] - pts[0]) < min_span_cells * mesh * (1 - 1e-9):
        raise DomainError(f"points span fewer than {min_span_cells} mesh cells")
    scales = [float(e) for e in scales]
    if len(scales) < 2:
        raise DomainError("need at least two scales")
    n = box_counts(pts, scales)
    slope, _ = np.polyfit(np.log(1.0 / np.array(scales)), np.log(n.astype(float)), 1)
    return float(slope)


def random_walk_bridge_zeros(n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Zero set, as positions in ``[0, 1]``, of a simple random walk bridge."""
    if n_steps % 2:
        raise ParameterError("a bridge needs an even number of steps")
    steps = np.r_[np.ones(n_steps // 2), -np.ones(n_steps // 2)]
    rng.shuffle(steps)
    walk = np.r_[0.0, np.cumsum(steps)]
    return np.flatnonzero(walk == 0) / n_steps


def random_walk_dimension(n_steps: int, n_bridges: int, seed: int = 0, min_points: int = 200) -> list[float]:
    """Box-counting slopes of independent bridge zero sets with enough zeros.

    Bridges with fewer than ``min_points`` zeros are redrawn.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    mesh = 1.0 / n_steps
    scales = dyadic_scales(mesh, 1.0)
    out = []
    while len(out) < n_bridges:
        z = random_walk_bridge_zeros(n_steps, rng)
        if z.size < min_points:
            continue
        out.append(box_dimension(z, scales, mesh=mesh, min_points=min_points))
    return out


def instability_coordinates(df: DifferenceField, graph: InstabilityGraph, level: int) -> np.ndarray:
    return np.asarray(df.env.coord(graph.points[level]), float)


def level_dimension(df: DifferenceField, graph: InstabilityGraph, level: int, min_points: int = 200) -> float:
    """Box-counting slope of the instability set on one level."""
    pts = instability_coordinates(df, graph, level)
    domain = graph.width * df.env.mesh
    return box_dimension(pts, dyadic_scales(df.env.mesh, domain), mesh=df.env.mesh, min_points=min_points)


def longest_instability_stretch(graph: InstabilityGraph) -> int:
    """Longest run of consecutive instability cells on any level."""
    best = 0
    for pts in graph.points:
        if pts.size == 0:
            continue
        breaks = np.flatnonzero(np.diff(pts) != 1)
        lengths = np.diff(np.r_[-1, breaks, pts.size - 1])
        best = max(best, int(lengths.max()))
    return best
