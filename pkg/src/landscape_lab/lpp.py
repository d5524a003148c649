"""Last-passage values to a fixed target, geodesic backtracking and the composition check.

Conventions
-----------
Paths move up (to the next level) and right (to larger ``x``). A path visits a
contiguous run of sites on every level between its source level and the target
level.

Discrete backend: the weight of a path is the sum of the site weights it
visits, endpoints included.

Semi-discrete backend: a path that enters level ``k`` at mesh index ``e`` and
leaves it at ``t >= e`` collects ``B_k(t) - B_k(e)``. The passage value to the
target ``p`` on the top level ``T`` satisfies

    G_T(i) = B_T(p) - B_T(i)                          for i <= p
    G_k(i) = -B_k(i) + max_{t >= i} [B_k(t) + G_{k+1}(t)]

and is ``-inf`` for ``i > p``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .environment import EnvironmentField, Kind, SitePoint
from .errors import DomainError, ParameterError

NEG_INF = -np.inf


class Sign(str, enum.Enum):
    MINUS = "Minus"
    PLUS = "Plus"
    UNTAGGED = "Untagged"


class Side(str, enum.Enum):
    LEFTMOST = "Leftmost"
    RIGHTMOST = "Rightmost"


def tol_eq(value: float) -> float:
    """Comparison tolerance for passage values of magnitude ``value``."""
    return 1e-9 * (1.0 + abs(float(value)))


@dataclass(frozen=True, eq=False)
class PassageField:
    """Last-passage values ``G(v)`` from every site to ``target``.

    ``argmax[k, i]`` (semi-discrete, ``k`` below the top) is the leftmost exact
    maximizer ``t >= i`` of ``B_k(t) + G_{k+1}(t)``; ``-1`` where unreachable.
    """

    env: EnvironmentField
    target: SitePoint
    sign_tag: Sign
    values: np.ndarray = field(repr=False)
    argmax: np.ndarray | None = field(default=None, repr=False)

    @property
    def env_ref(self) -> str:
        return self.env.identity

    def value(self, v: SitePoint) -> float:
        return float(self.values[v.level, v.x])

    def reachable(self, v: SitePoint) -> bool:
        return self.env.contains(v) and v.level <= self.target.level and np.isfinite(self.values[v.level, v.x])

    def exit_scores(self, level: int) -> np.ndarray:
        """``B_k(t) + G_{k+1}(t)`` on ``level``: the score of leaving the level at ``t``."""
        return self.env.paths[level] + self.values[level + 1]


def _next_record(h: np.ndarray, m: np.ndarray) -> np.ndarray:
    """For each ``i``, the smallest ``t >= i`` with ``h[t] == m[t]`` (a suffix-max record)."""
    n = h.shape[0]
    idx = np.where((h == m) & np.isfinite(h), np.arange(n), n)
    nxt = np.minimum.accumulate(idx[::-1])[::-1]
    return np.where(nxt >= n, -1, nxt)


def suffix_max(h: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(h[::-1])[::-1]


def backward_semidiscrete(env: EnvironmentField, top: int, entry: np.ndarray,
                          keep_argmax: bool = False, stop: int = 0) -> tuple[np.ndarray, np.ndarray | None]:
    """Backward recursion from a terminal row.

    ``entry[e]`` is the best value of a path that enters level ``top`` at ``e``.
    Returns ``vals`` with rows ``stop..top`` filled (all other rows ``-inf``)
    and, optionally, the leftmost exact argmax per level.
    """
    n, m = env.shape
    vals = np.full((n, m), NEG_INF)
    vals[top] = entry
    amax = np.full((n, m), -1, dtype=np.int32) if keep_argmax else None
    paths = env.paths
    for k in range(top - 1, stop - 1, -1):
        h = paths[k] + vals[k + 1]
        mx = suffix_max(h)
        vals[k] = mx - paths[k]
        if keep_argmax:
            amax[k] = _next_record(h, mx)
    return vals, amax


def backward_step(paths_row: np.ndarray, above: np.ndarray) -> np.ndarray:
    """One level of the semi-discrete recursion: values on a level from the row above."""
    return suffix_max(paths_row + above) - paths_row


def _solve_discrete(env: EnvironmentField, target: SitePoint) -> np.ndarray:
    w = env.weights
    n, m = env.shape
    top, p = target.level, target.x
    g = np.full((n, m), NEG_INF)
    row = g[top]
    row[p] = w[top, p]
    for c in range(p - 1, -1, -1):
        row[c] = w[top, c] + row[c + 1]
    for k in range(top - 1, -1, -1):
        up = g[k + 1]
        cur = g[k]
        cur[p] = w[k, p] + up[p]
        for c in range(p - 1, -1, -1):
            cur[c] = w[k, c] + max(up[c], cur[c + 1])
    return g


def solve_to_target(env: EnvironmentField, target: SitePoint, sign_tag: Sign = Sign.UNTAGGED) -> PassageField:
    """Last-passage values from every site to ``target`` (which must sit on the top level)."""
    if not env.contains(target):
        raise ParameterError(f"target {target} out of bounds")
    if target.level != env.n_levels - 1:
        raise ParameterError("target must lie on the top level")
    sign_tag = Sign(sign_tag)
    if env.kind is Kind.EXPONENTIAL:
        return PassageField(env, target, sign_tag, _frozen(_solve_discrete(env, target)))
    b_top = env.paths[target.level]
    entry = np.full(env.width, NEG_INF)
    entry[: target.x + 1] = b_top[target.x] - b_top[: target.x + 1]
    vals, amax = backward_semidiscrete(env, target.level, entry, keep_argmax=True)
    return PassageField(env, target, sign_tag, _frozen(vals), _frozen(amax))


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Geodesic:
    """A lattice path stored as one ``(level, x_start, x_end)`` run per level."""

    runs: tuple[tuple[int, int, int], ...]
    side: Side

    @property
    def source(self) -> SitePoint:
        k, a, _ = self.runs[0]
        return SitePoint(k, a)

    @property
    def end(self) -> SitePoint:
        k, _, b = self.runs[-1]
        return SitePoint(k, b)

    @property
    def points(self) -> list[SitePoint]:
        return [SitePoint(k, x) for k, a, b in self.runs for x in range(a, b + 1)]

    @property
    def levels(self) -> np.ndarray:
        return np.array([r[0] for r in self.runs])

    @property
    def starts(self) -> np.ndarray:
        return np.array([r[1] for r in self.runs])

    @property
    def ends(self) -> np.ndarray:
        return np.array([r[2] for r in self.runs])

    def run_at(self, level: int) -> tuple[int, int] | None:
        i = level - self.runs[0][0]
        if 0 <= i < len(self.runs):
            return self.runs[i][1], self.runs[i][2]
        return None

    def contains(self, v: SitePoint) -> bool:
        r = self.run_at(v.level)
        return r is not None and r[0] <= v.x <= r[1]


def exit_choice(pf: PassageField, level: int, x: int, side: Side, tol_tie: float) -> int:
    """Where a geodesic entering ``level`` at ``x`` leaves that level (semi-discrete).

    The exit is the leftmost or rightmost ``t >= x`` whose score is within
    ``tol_tie`` of the best score.
    """
    b = pf.env.paths[level]
    g = pf.values[level + 1]
    best = int(pf.argmax[level, x])
    thr = b[best] + g[best] - tol_tie
    if side is Side.LEFTMOST:
        if best == x:
            return x
        seg = b[x: best + 1] + g[x: best + 1] >= thr
        return x + int(np.argmax(seg))
    # values + paths is the suffix max of the scores, nonincreasing in t, so the
    # rightmost near-maximizer is the last t where it stays above the threshold
    s = pf.values[level]
    m = s.shape[0]

    def above(t: int) -> bool:
        return t < m and s[t] + b[t] >= thr

    lo, step = best, 1
    while above(lo + step):
        lo += step
        step *= 2
    hi = min(lo + step, m)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if above(mid):
            lo = mid
        else:
            hi = mid
    return lo


class GeodesicTracer:
    """Memoized leftmost or rightmost geodesics for one semi-discrete passage field.

    Geodesics that enter a level at the same site coincide from there on, so the
    exit chosen on each ``(level, entry)`` pair is cached and shared.
    """

    def __init__(self, pf: PassageField, side: Side = Side.LEFTMOST, tol_tie: float = 1e-9):
        if pf.env.kind is not Kind.SEMI_DISCRETE:
            raise ParameterError("GeodesicTracer works on the semi-discrete backend")
        self.pf = pf
        self.side = Side(side)
        self.tol_tie = float(tol_tie)
        self._exit: dict[tuple[int, int], int] = {}

    def exit(self, level: int, x: int) -> int:
        key = (level, x)
        t = self._exit.get(key)
        if t is None:
            t = exit_choice(self.pf, level, x, self.side, self.tol_tie)
            self._exit[key] = t
        return t

    def trace(self, src: SitePoint) -> tuple[np.ndarray, np.ndarray]:
        """Entry and exit index per level from ``src.level`` to the target level."""
        if not self.pf.reachable(src):
            raise DomainError(f"{src} cannot reach the target")
        top = self.pf.target.level
        n = top - src.level + 1
        ent = np.empty(n, dtype=np.int64)
        ext = np.empty(n, dtype=np.int64)
        x = src.x
        for j, k in enumerate(range(src.level, top)):
            t = self.exit(k, x)
            ent[j], ext[j] = x, t
            x = t
        ent[-1], ext[-1] = x, self.pf.target.x
        return ent, ext

    def geodesic(self, src: SitePoint) -> Geodesic:
        ent, ext = self.trace(src)
        runs = tuple((src.level + j, int(a), int(b)) for j, (a, b) in enumerate(zip(ent, ext)))
        return Geodesic(runs, self.side)


def extract_geodesic(pf: PassageField, src: SitePoint, side: Side = Side.LEFTMOST, tol_tie: float = 1e-9) -> Geodesic:
    """Trace the leftmost or rightmost geodesic from ``src`` to the target."""
    side = Side(side)
    if not pf.reachable(src):
        raise DomainError(f"{src} cannot reach the target")
    top, p = pf.target.level, pf.target.x
    runs: list[tuple[int, int, int]] = []
    if pf.env.kind is Kind.EXPONENTIAL:
        g = pf.values
        k, c = src.level, src.x
        start = c
        while (k, c) != (top, p):
            up = g[k + 1, c] if k < top else NEG_INF
            right = g[k, c + 1] if c + 1 <= p else NEG_INF
            tie = abs(up - right) <= tol_tie if np.isfinite(up) and np.isfinite(right) else False
            go_up = up > right if not tie else side is Side.LEFTMOST
            if go_up:
                runs.append((k, start, c))
                k += 1
                start = c
            else:
                c += 1
        runs.append((k, start, c))
        return Geodesic(tuple(runs), side)
    x = src.x
    for k in range(src.level, top):
        t = exit_choice(pf, k, x, side, tol_tie)
        runs.append((k, x, t))
        x = t
    runs.append((top, x, p))
    return Geodesic(tuple(runs), side)


def path_weight(env: EnvironmentField, geo: Geodesic) -> float:
    """Weight of a path computed directly from the environment."""
    if env.kind is Kind.EXPONENTIAL:
        return float(sum(env.weights[k, a: b + 1].sum() for k, a, b in geo.runs))
    return float(sum(env.paths[k, b] - env.paths[k, a] for k, a, b in geo.runs))


def passage_from(env: EnvironmentField, src: SitePoint, last_level: int) -> np.ndarray:
    """Point-to-point values ``L(src -> (y, k))`` for ``k`` in ``src.level..last_level``.

    Row ``j`` of the result is level ``src.level + j``. Discrete values include
    both endpoint weights. Semi-discrete values count the increments from the
    entry at ``src`` to the end point ``y`` on level ``k``.
    """
    k0 = src.level
    n_rows = last_level - k0 + 1
    m = env.width
    out = np.full((n_rows, m), NEG_INF)
    if env.kind is Kind.EXPONENTIAL:
        w = env.weights
        row = out[0]
        row[src.x] = w[k0, src.x]
        for c in range(src.x + 1, m):
            row[c] = row[c - 1] + w[k0, c]
        for j in range(1, n_rows):
            k = k0 + j
            prev, cur = out[j - 1], out[j]
            for c in range(src.x, m):
                left = cur[c - 1] if c > src.x else NEG_INF
                cur[c] = w[k, c] + max(prev[c], left)
        return out
    b = env.paths
    out[0, src.x:] = b[k0, src.x:] - b[k0, src.x]
    for j in range(1, n_rows):
        k = k0 + j
        out[j] = b[k] + np.maximum.accumulate(out[j - 1] - b[k])
    return out


@dataclass
class CompositionReport:
    n_samples: int
    max_defect: float
    max_scaled_defect: float
    passed: bool
    samples: list[dict] = field(default_factory=list)


def composition_defect(env: EnvironmentField, src: SitePoint, mid_level: int, pf: PassageField) -> float:
    """``|G(src) - max_z [L(src -> (z, mid)) + G(z, mid)]|`` for one source."""
    if not (src.level < mid_level < pf.target.level):
        raise ParameterError("need src level < mid_level < target level")
    fwd = passage_from(env, src, mid_level)[-1]
    g_mid = pf.values[mid_level]
    total = fwd + g_mid
    if env.kind is Kind.EXPONENTIAL:
        total = total - env.weights[mid_level]
    best = float(np.max(total))
    return abs(pf.value(src) - best)


def check_composition(env: EnvironmentField, src: SitePoint | None, mid_level: int | None, pf: PassageField,
                      n_samples: int = 1, rng: np.random.Generator | None = None) -> CompositionReport:
    """Verify the composition law at ``(src, mid_level)`` or at ``n_samples`` random pairs.

    When ``src`` and ``mid_level`` are given they are checked first; random
    pairs drawn from ``rng`` fill the remaining samples.
    """
    top = pf.target.level
    pairs: list[tuple[SitePoint, int]] = []
    if src is not None or mid_level is not None:
        if src is None or mid_level is None:
            raise ParameterError("src and mid_level go together")
        if not (src.level < mid_level < top):
            raise ParameterError("need src level < mid_level < target level")
        pairs.append((src, mid_level))
    if top < 2 and len(pairs) < n_samples:
        raise ParameterError("composition needs at least three levels")
    rng = rng or np.random.default_rng(0)
    while len(pairs) < n_samples:
        k = int(rng.integers(0, top - 1))
        mid = int(rng.integers(k + 1, top))
        x = int(rng.integers(0, pf.target.x + 1))
        pairs.append((SitePoint(k, x), mid))
    worst = worst_scaled = 0.0
    samples = []
    for s, mid in pairs:
        d = composition_defect(env, s, mid, pf)
        scaled = d / (1.0 + abs(pf.value(s)))
        worst = max(worst, d)
        worst_scaled = max(worst_scaled, scaled)
        samples.append({"level": s.level, "x": s.x, "mid": mid, "defect": d})
    return CompositionReport(len(pairs), worst, worst_scaled, worst_scaled <= 1e-9, samples)
