"""Stage pipeline: simulate, analyze, classify, render and the run report.

Every stage reads the previous stage's files from a per-seed directory, so
stages can be rerun on their own. ``run`` chains them in one process and
reuses the in-memory objects.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .busemann import (DifferenceField, build_difference_field, check_growth, cocycle_defect, difference_summary,
                       monotonicity_defect, unbounded_levels, write_difference_csv)
from .config import RunConfig
from .environment import EnvironmentField, Kind, SitePoint, gen_environment, load_environment
from .errors import CapabilityError, DomainError, InconsistencyError, LandscapeError, ParameterError
from .instability import (InstabilityGraph, Island, PointRole, build_instability_graph, level_dimension,
                          longest_instability_stretch, random_walk_dimension)
from .io import read_json, write_csv, write_json
from .lpp import Side, Sign, check_composition
from .render import Layers, downsample, render_svg
from .shocks import (BundleFactory, ConfigClass, ShockInterface, Tracers, classify_configuration,
                     competition_field, detect_shock, reconstruct_island_from_tip, shock_interfaces_from_point)

# rows of the taxonomy that require an instability point
UNSTABLE_CLASSES = frozenset(range(9, 21))
SIGNED_STABLE_CLASSES = frozenset(range(5, 9))


@dataclass
class CheckResult:
    name: str
    hard: bool
    status: str
    max_defect: float | None = None
    detail: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def to_json(self) -> dict:
        return {"name": self.name, "hard": self.hard, "status": self.status, "max_defect": self.max_defect,
                "detail": self.detail}


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def skipped(name: str, hard: bool, reason: str) -> CheckResult:
    return CheckResult(name, hard, "skipped", None, {"reason": reason})


def vacuous(name: str, hard: bool, reason: str) -> CheckResult:
    return CheckResult(name, hard, "pass", 0.0, {"vacuous": True, "reason": reason})


@dataclass
class SeedReport:
    seed: int
    checks: list[CheckResult] = field(default_factory=list)
    census: dict = field(default_factory=dict)
    classes: dict[str, int] = field(default_factory=dict)
    dims: list[dict] = field(default_factory=list)
    timing: dict[str, float] = field(default_factory=dict)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_json(self) -> dict:
        return {"seed": self.seed, "checks": [c.to_json() for c in self.checks], "census": self.census,
                "classes": self.classes, "dims": self.dims}


@dataclass
class RunReport:
    config: RunConfig
    seeds: list[SeedReport] = field(default_factory=list)
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """True when no hard check failed."""
        return not any(c.hard and c.failed for c in self.all_checks())

    def all_checks(self) -> list[CheckResult]:
        return self.checks + [c for s in self.seeds for c in s.checks]

    def to_json(self) -> dict:
        return {"format_version": 1, "passed": self.passed, "config": self.config.as_strings(),
                "checks": [c.to_json() for c in self.checks], "seeds": [s.to_json() for s in self.seeds]}

    def summary_lines(self) -> list[str]:
        out = []
        for c in self.checks:
            out.append(_line("run", c))
        for s in self.seeds:
            for c in s.checks:
                out.append(_line(f"seed {s.seed}", c))
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return out


def _line(where: str, c: CheckResult) -> str:
    tag = {"pass": "PASS", "fail": "FAIL", "skipped": "SKIP"}[c.status]
    kind = "hard" if c.hard else "soft"
    defect = "" if c.max_defect is None else f" max_defect={c.max_defect:.3g}"
    return f"{tag} [{kind}] {where}: {c.name}{defect}"


# ---------------------------------------------------------------------------
# per-seed state


def seed_dir(root: Path, seed: int) -> Path:
    return Path(root) / f"seed-{seed:04d}"


class SeedState:
    """Lazily loaded objects for one seed directory."""

    def __init__(self, cfg: RunConfig, seed: int, root: Path):
        self.cfg = cfg
        self.seed = seed
        self.dir = seed_dir(root, seed)
        self._env: EnvironmentField | None = None
        self._df: DifferenceField | None = None
        self._df_error: str | None = None
        self._graph: InstabilityGraph | None = None

    @property
    def env(self) -> EnvironmentField:
        if self._env is None:
            stem = self.dir / "environment"
            if not stem.with_suffix(".json").exists():
                raise FileNotFoundError(f"{stem}.json missing; run the simulate stage first")
            self._env = load_environment(stem)
        return self._env

    @property
    def df(self) -> DifferenceField | None:
        """Difference field, or ``None`` when two distinct targets do not fit."""
        if self._df is None and self._df_error is None:
            try:
                self._df = build_difference_field(self.env, theta=self.cfg["busemann.theta"],
                                                  delta_sep=self.cfg["busemann.delta_sep"], anchor=self.cfg.anchor)
            except ParameterError as exc:
                self._df_error = str(exc)
        return self._df

    @property
    def df_error(self) -> str | None:
        _ = self.df
        return self._df_error

    def tol_flat(self) -> float:
        g = self.df.pf_minus.values[:, : self.df.valid_width]
        return self.cfg["tol.flat"] * (1.0 + float(np.max(np.abs(g[np.isfinite(g)]))))

    @property
    def graph(self) -> InstabilityGraph | None:
        if self._graph is None and self.df is not None:
            path = self.dir / "graph.json"
            if path.exists():
                self._graph = InstabilityGraph.from_json(read_json(path))
            else:
                self._graph = build_instability_graph(self.df, self.tol_flat())
        return self._graph

    def rng(self, tag: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, tag])


# ---------------------------------------------------------------------------
# simulate


def simulate(cfg: RunConfig, seed: int, root: Path) -> SeedState:
    st = SeedState(cfg, seed, root)
    st.dir.mkdir(parents=True, exist_ok=True)
    env = gen_environment({**cfg.env_params, "seed": seed})
    env.save(st.dir / "environment")
    st._env = env
    return st


# ---------------------------------------------------------------------------
# analyze


def _csv_levels(cfg: RunConfig, df: DifferenceField) -> list[int]:
    choice = cfg["analysis.csv_levels"]
    if choice == "all":
        return list(range(df.n_levels))
    if choice == "none":
        return []
    if choice == "anchor":
        return [df.anchor.level]
    return [k for k in choice if 0 <= k < df.n_levels]


def _composition(st: SeedState) -> CheckResult:
    env, df, cfg = st.env, st.df, st.cfg
    n = cfg["analysis.composition_pairs"]
    if env.n_levels < 3 or n == 0:
        return vacuous("composition", True, "fewer than three levels or no pairs requested")
    worst = worst_raw = 0.0
    for tag, pf in ((11, df.pf_minus), (12, df.pf_plus)):
        rep = check_composition(env, None, None, pf, n_samples=n, rng=st.rng(tag))
        worst = max(worst, rep.max_scaled_defect)
        worst_raw = max(worst_raw, rep.max_defect)
    return CheckResult("composition", True, _verdict(worst <= cfg["tol.eq"]), worst,
                       {"pairs_per_sign": n, "max_raw_defect": worst_raw})


def _reachable_site(rng: np.random.Generator, df: DifferenceField) -> SitePoint:
    return SitePoint(int(rng.integers(0, df.n_levels)), int(rng.integers(0, df.valid_width)))


def _cocycle(st: SeedState) -> CheckResult:
    df = st.df
    rng = st.rng(13)
    triples = [tuple(_reachable_site(rng, df) for _ in range(3)) for _ in range(200)]
    exact = max(cocycle_defect(df, s, triples) for s in (Sign.MINUS, Sign.PLUS))
    rounded = max(cocycle_defect(df, s, triples, exact=False) for s in (Sign.MINUS, Sign.PLUS))
    return CheckResult("cocycle", True, _verdict(exact == 0.0), exact,
                       {"triples": len(triples), "float_rounding_defect": rounded})


def _monotonicity(st: SeedState) -> CheckResult:
    raw, rel = monotonicity_defect(st.df)
    ratio = rel * 1e-9 / st.cfg["tol.eq"]
    return CheckResult("monotonicity", True, _verdict(ratio <= 1.0), raw, {"max_defect_over_tol_eq": ratio})


def _growth(st: SeedState) -> CheckResult:
    df = st.df
    try:
        g = check_growth(df, df.anchor.level)
    except DomainError as exc:
        return skipped("growth", False, str(exc))
    w = df.valid_width
    centre = (w // 4 + (w - w // 4)) / 2.0
    pm, pp = df.pf_minus.target.x, df.pf_plus.target.x
    predicted = 1.0 - math.sqrt((pm - centre) / (pp - centre)) if pm > centre else None
    return CheckResult("growth", False, _verdict(g.relative_gap <= 0.05), g.relative_gap,
                       {"level": g.level, "slope_minus": g.slope_minus, "slope_plus": g.slope_plus,
                        "shape_prediction_gap": predicted})


def island_structure(graph: InstabilityGraph) -> dict[str, int]:
    """Counts of structural defects in the island catalogue."""
    owner: dict[tuple[int, int], int] = {}
    overlaps = misordered = off_graph = interior_on_graph = 0
    for i, isl in enumerate(graph.islands):
        for t, l, r in zip(isl.levels, isl.left, isl.right):
            if l > r:
                misordered += 1
            for x in (l, r):
                off_graph += not graph.contains(SitePoint(t, x))
            pts = graph.points[t]
            lo, hi = np.searchsorted(pts, [l + 1, r])
            interior_on_graph += int(max(0, hi - lo))
        for c in isl.cells():
            if c in owner:
                overlaps += 1
            owner[c] = i
    return {"overlapping_cells": overlaps, "misordered_levels": misordered,
            "boundary_off_graph": off_graph, "interior_on_graph": interior_on_graph}


def island_census(graph: InstabilityGraph) -> dict[str, Any]:
    life = Counter(isl.lifetime for isl in graph.islands)
    scales = Counter(int(math.floor(math.log2(isl.lifetime))) for isl in graph.islands)
    roles = Counter(r.value for r in graph.roles().values())
    return {
        "islands": len(graph.islands),
        "truncated": len(graph.truncated),
        "strands": len(graph.strands),
        "instability_points": graph.n_points,
        "lifetime_histogram": {str(k): v for k, v in sorted(life.items())},
        "dyadic_lifetime_scales": {str(k): v for k, v in sorted(scales.items())},
        "roles": dict(sorted(roles.items())),
        "pinched_islands": sum(1 for isl in graph.islands if isl.strict_violations()),
        "longest_stretch": longest_instability_stretch(graph),
    }


def _dimension_levels(df: DifferenceField) -> list[int]:
    return sorted({df.anchor.level, *range(0, df.n_levels, max(1, df.n_levels // 4))})


def _dimensions(df: DifferenceField, graph: InstabilityGraph) -> list[dict]:
    out = []
    for k in _dimension_levels(df):
        try:
            slope = level_dimension(df, graph, k)
        except DomainError:
            slope = None
        out.append({"level": k, "slope": slope, "points": int(graph.points[k].size)})
    return out


def _robustness(st: SeedState, base_count: int) -> CheckResult:
    df, cfg = st.df, st.cfg
    base = st.tol_flat()
    counts = {}
    for f in cfg["analysis.tol_flat_factors"]:
        counts[repr(f)] = len(build_instability_graph(df, base * f).islands)
    ref = max(base_count, 1)
    worst = max(abs(c - base_count) / ref for c in counts.values())
    return CheckResult("robustness", False, _verdict(worst <= 0.10), worst,
                       {"tol_flat": base, "island_counts": counts})


def analyze(st: SeedState) -> SeedReport:
    """Busemann checks, the instability graph, islands and dimensions."""
    cfg = st.cfg
    rep = SeedReport(st.seed)
    t0 = time.perf_counter()
    df = st.df
    if df is None:
        write_csv(st.dir / "difference.csv", ["level", "x", "G_minus", "G_plus", "D"], [])
        reason = f"no difference field: {st.df_error}"
        for name, on in (("composition", "composition"), ("cocycle", "cocycle"), ("monotonicity", "cocycle"),
                         ("islands", "islands")):
            if cfg.enabled(on):
                rep.checks.append(vacuous(name, True, reason))
        rep.census = {"islands": 0, "truncated": 0, "strands": 0, "instability_points": 0}
        rep.timing["analyze"] = time.perf_counter() - t0
        _save_stage(st, "analysis", rep)
        return rep
    write_difference_csv(df, st.dir / "difference.csv", _csv_levels(cfg, df))
    write_json(difference_summary(df), st.dir / "difference.json")
    if cfg.enabled("composition"):
        rep.checks.append(_composition(st))
    if cfg.enabled("cocycle"):
        rep.checks.append(_cocycle(st))
        rep.checks.append(_monotonicity(st))
    if cfg.enabled("growth"):
        rep.checks.append(_growth(st))
    graph = build_instability_graph(df, st.tol_flat())
    st._graph = graph
    if cfg.enabled("islands"):
        defects = island_structure(graph)
        rep.checks.append(CheckResult("islands", True, _verdict(not any(defects.values())),
                                      float(sum(defects.values())), defects))
        pinched = sum(1 for isl in graph.islands if isl.strict_violations())
        rep.checks.append(CheckResult("strict_boundaries", False, _verdict(pinched == 0), float(pinched),
                                      {"pinched_islands": pinched}))
        longest = longest_instability_stretch(graph)
        rep.checks.append(CheckResult("nowhere_density", False, _verdict(longest < 10), float(longest),
                                      {"longest_stretch": longest, "limit": 10}))
    rep.census = island_census(graph)
    occupied = [k for k in range(df.n_levels) if graph.points[k].size]
    rep.census["levels_without_sign_change"] = unbounded_levels(df, occupied, graph.tol_flat)
    if cfg.enabled("dimension"):
        rep.dims = _dimensions(df, graph)
        anchor_dim = next(d for d in rep.dims if d["level"] == df.anchor.level)
        if graph.n_points < 500 or anchor_dim["slope"] is None:
            rep.checks.append(skipped("dimension", False, "fewer than 500 instability points or too few on the "
                                                          "anchor level"))
        else:
            s = anchor_dim["slope"]
            rep.checks.append(CheckResult("dimension", False, _verdict(0.35 <= s <= 0.65), s,
                                          {"level": df.anchor.level, "points": anchor_dim["points"]}))
    if cfg.enabled("robustness"):
        rep.checks.append(_robustness(st, len(graph.islands)))
    write_json(graph.to_json(rep.dims), st.dir / "graph.json", schema="instability_graph.v1.json")
    rep.timing["analyze"] = time.perf_counter() - t0
    _save_stage(st, "analysis", rep)
    return rep


def _save_stage(st: SeedState, name: str, rep: SeedReport) -> None:
    write_json(rep.to_json(), st.dir / f"{name}.json")
    (st.dir / f"{name}.timing.txt").write_text("".join(f"{k} {v:.3f}\n" for k, v in rep.timing.items()))


# ---------------------------------------------------------------------------
# classify


def _sample_points(st: SeedState) -> list[SitePoint]:
    df = st.df
    rng = st.rng(21)
    n = st.cfg["analysis.sample_points"]
    w = df.valid_width
    if w < 3 or df.n_levels < 2:
        return []
    ks = rng.integers(0, df.n_levels - 1, size=n)
    xs = rng.integers(1, w - 1, size=n)
    return [SitePoint(int(k), int(x)) for k, x in zip(ks, xs)]


def _role_points(st: SeedState) -> dict[PointRole, list[SitePoint]]:
    graph = st.graph
    rng = st.rng(22)
    n = min(st.cfg["analysis.role_islands"], len(graph.islands))
    pick = sorted(rng.choice(len(graph.islands), size=n, replace=False).tolist()) if n else []
    out: dict[PointRole, list[SitePoint]] = {r: [] for r in (PointRole.TIP, PointRole.BOTTOM, PointRole.LEFT,
                                                             PointRole.RIGHT)}
    for i in pick:
        for (k, x), role in sorted(graph.islands[i].roles().items()):
            if role in out:
                out[role].append(SitePoint(k, x))
    return out


def _classify_chunk(df: DifferenceField, graph: InstabilityGraph, pts: list[SitePoint], tol_tie: float,
                    resolution: int) -> list[ConfigClass | str]:
    fac = BundleFactory.from_field(df, tol_tie)
    out: list[ConfigClass | str] = []
    for v in pts:
        try:
            out.append(classify_configuration(fac.bundle(v), graph, resolution))
        except (InconsistencyError, DomainError) as exc:
            out.append(f"{type(exc).__name__}: {exc}")
    return out


def classify_points(st: SeedState, pts: list[SitePoint]) -> list[ConfigClass | str]:
    """Classify in chunks over a bounded worker pool; results keep input order."""
    threads = st.cfg.threads
    tol_tie, res = st.cfg["tol.tie"], st.cfg["analysis.resolution"]
    if threads <= 1 or len(pts) < 2 * threads:
        return _classify_chunk(st.df, st.graph, pts, tol_tie, res)
    size = math.ceil(len(pts) / threads)
    chunks = [pts[i: i + size] for i in range(0, len(pts), size)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: _classify_chunk(st.df, st.graph, c, tol_tie, res), chunks))
    return [r for part in parts for r in part]


def _role_checks(roles: dict[PointRole, list[SitePoint]], results: dict[SitePoint, ConfigClass | str]
                 ) -> list[CheckResult]:
    def share(pts: list[SitePoint], want: Callable[[ConfigClass], bool]) -> tuple[float, dict]:
        got = [results[p] for p in pts if isinstance(results[p], ConfigClass)]
        hist = Counter(c.special.value for c in got)
        ok = sum(1 for c in got if want(c))
        return (ok / len(got) if got else 1.0), {"points": len(got), "matching": ok, "specials": dict(sorted(hist.items()))}

    checks = []
    for name, role_pts, want in (
        ("tips_pns", roles[PointRole.TIP], lambda c: c.special.value == "pns"),
        ("bottoms_snowbird", roles[PointRole.BOTTOM], lambda c: c.special.value == "snowbird"),
        ("left_boundaries_hugging_minus", roles[PointRole.LEFT], lambda c: c.special.value == "hugging_minus"),
        ("right_boundaries_hugging_plus", roles[PointRole.RIGHT], lambda c: c.special.value == "hugging_plus"),
    ):
        frac, detail = share(role_pts, want)
        checks.append(CheckResult(name, False, _verdict(frac == 1.0), 1.0 - frac, detail))
    return checks


def _interface_sources(st: SeedState) -> list[SitePoint]:
    """Half random cells on one level, half island tips."""
    df, graph = st.df, st.graph
    n = st.cfg["analysis.interface_sources"]
    rng = st.rng(31)
    w = df.valid_width
    level = max(1, (3 * (df.n_levels - 1)) // 4)
    xs = np.sort(rng.choice(np.arange(1, w - 1), size=min(n - n // 2, max(0, w - 2)), replace=False))
    src = [SitePoint(level, int(x)) for x in xs]
    tips = [isl.tip for isl in graph.islands if isl.tip.level < df.n_levels - 1]
    if tips and n // 2:
        idx = rng.choice(len(tips), size=min(n // 2, len(tips)), replace=False)
        src += [tips[i] for i in sorted(idx.tolist())]
    return src


def _edge_side(run: tuple[int, int], edge: int) -> int:
    """-1 if the run lies left of the dual edge ``(edge, edge+1)``, +1 if right, 0 if it straddles it."""
    a, b = run
    if b <= edge:
        return -1
    if a >= edge + 1:
        return 1
    return 0


def count_crossings(itf: ShockInterface, paths: list, width: int) -> int:
    """Sampled paths whose interior crosses the interior of ``itf``."""
    off = -1 if itf.side is Side.LEFTMOST else 0
    keep = itf.inside(width)
    keep[0] = keep[-1] = False
    lv, xs = itf.levels[keep][::-1], itf.xs[keep][::-1]
    hits = 0
    for p in paths:
        k0, n = p.origin.level, p.entries.size
        prev = None
        prev_level = None
        for k, x in zip(lv.tolist(), xs.tolist()):
            j = k - k0
            if j <= 0 or j >= n - 1:
                prev = None
                continue
            s = _edge_side((int(p.entries[j]), int(p.exits[j])), x + off)
            if s == 0 or (prev is not None and prev_level == k - 1 and s != prev):
                hits += 1
                break
            prev, prev_level = s, k
    return hits


def _interfaces(st: SeedState, sources: list[SitePoint]) -> dict[Sign, list[tuple[SitePoint, ShockInterface, ShockInterface]]]:
    out = {}
    for sign in (Sign.MINUS, Sign.PLUS):
        out[sign] = []
        for s in sources:
            cf = competition_field(st.env, st.df, s, sign)
            left, right = shock_interfaces_from_point(cf)
            out[sign].append((s, left, right))
    return out


def _interface_checks(st: SeedState, itfs, tracers: dict[Sign, Tracers]) -> list[CheckResult]:
    df, graph = st.df, st.graph
    w = df.valid_width
    rng = st.rng(32)
    n_geo = st.cfg["analysis.geodesics"]
    top = df.n_levels - 1
    crossings = 0
    not_shock = tested = 0
    off_graph = on_tested = 0
    coalesce_bad = order_bad = 0
    for sign in (Sign.MINUS, Sign.PLUS):
        tr = tracers[sign]
        geos = []
        for _ in range(n_geo):
            v = SitePoint(int(rng.integers(0, top)), int(rng.integers(0, w)))
            geos.append(tr.path(v, Side.LEFTMOST if rng.integers(0, 2) == 0 else Side.RIGHTMOST))
        for src, left, right in itfs[sign]:
            from_graph = graph.contains(src)
            for itf in (left, right):
                crossings += count_crossings(itf, geos, w)
                keep = itf.inside(w)
                keep[0] = keep[-1] = False
                for k, x in zip(itf.levels[keep].tolist(), itf.xs[keep].tolist()):
                    tested += 1
                    not_shock += detect_shock(tr.pf, SitePoint(k, x), st.cfg["tol.tie"], tracers=tr) is None
                if from_graph:
                    inside = itf.inside(w)
                    for k, x in zip(itf.levels[inside].tolist(), itf.xs[inside].tolist()):
                        on_tested += 1
                        off_graph += not graph.contains(SitePoint(k, x))
        for side in (0, 1):
            paths = [(s, (l, r)[side]) for s, l, r in itfs[sign]]
            for i in range(len(paths)):
                for j in range(i + 1, len(paths)):
                    coalesce_bad += not _coalesce(paths[i][1], paths[j][1])
    level_src = {}
    for sign in (Sign.MINUS, Sign.PLUS):
        for s, l, r in itfs[sign]:
            level_src.setdefault(s.level, {}).setdefault(s.x, {})[sign] = (l, r)
    for level, by_x in level_src.items():
        xs = sorted(by_x)
        for a in range(len(xs)):
            for b in range(a + 1, len(xs)):
                pa, mb = by_x[xs[a]].get(Sign.PLUS), by_x[xs[b]].get(Sign.MINUS)
                if pa is None or mb is None:
                    continue
                for side in (0, 1):
                    order_bad += int(np.any(pa[side].xs > mb[side].xs))
    return [
        CheckResult("duality", True, _verdict(crossings == 0), float(crossings),
                    {"interfaces": 2 * sum(len(v) for v in itfs.values()), "geodesics_per_sign": n_geo}),
        CheckResult("interface_shocks", True, _verdict(not_shock == 0), float(not_shock), {"points": tested}),
        CheckResult("interface_on_graph", True, _verdict(off_graph == 0), float(off_graph), {"points": on_tested}),
        CheckResult("interface_coalescence", True, _verdict(coalesce_bad == 0), float(coalesce_bad), {}),
        CheckResult("interface_order", True, _verdict(order_bad == 0), float(order_bad), {}),
    ]


def _coalesce(a: ShockInterface, b: ShockInterface) -> bool:
    """Once two interfaces share a position on some level they agree on every lower level."""
    common = sorted(set(a.levels.tolist()) & set(b.levels.tolist()), reverse=True)
    met = False
    for k in common:
        same = a.position(k) == b.position(k)
        if met and not same:
            return False
        met = met or same
    return True


def _roundtrip(st: SeedState, classes: dict[SitePoint, ConfigClass | str]) -> tuple[CheckResult, dict]:
    graph, df, env = st.graph, st.df, st.env
    rng = st.rng(41)
    n = min(st.cfg["analysis.roundtrip_islands"], len(graph.islands))
    pick = sorted(rng.choice(len(graph.islands), size=n, replace=False).tolist()) if n else []
    items = []
    mismatches = 0
    for i in pick:
        isl = graph.islands[i]
        try:
            got = reconstruct_island_from_tip(isl.tip, env, df, graph.tol_flat)
            status = "island" if got is not None else "absent"
        except LandscapeError:
            got, status = None, "truncated"
        ok = got is not None and got.cells() == isl.cells()
        mismatches += not ok
        items.append({"tip": {"level": isl.tip.level, "x": isl.tip.x}, "status": status,
                      "island": None if got is None else got.to_json(), "matches": ok})
    roles = graph.roles()
    dust = [v for v, c in sorted(classes.items()) if isinstance(c, ConfigClass) and c.class_id == 9
            and roles.get((v.level, v.x)) is PointRole.DUST]
    dust_found = 0
    for v in dust:
        try:
            got = reconstruct_island_from_tip(v, env, df, graph.tol_flat)
        except LandscapeError:
            got = None
        dust_found += got is not None
        items.append({"tip": {"level": v.level, "x": v.x}, "status": "island" if got else "absent",
                      "island": None if got is None else got.to_json(), "matches": None})
    check = CheckResult("roundtrip", True, _verdict(mismatches == 0 and dust_found == 0),
                        float(mismatches + dust_found),
                        {"islands": n, "mismatches": mismatches, "dust_pns_points": len(dust),
                         "dust_with_island": dust_found})
    return check, {"format_version": 1, "seed": st.seed, "items": items}


def classify(st: SeedState) -> SeedReport:
    """Taxonomy census, shock census, interface checks and the island round trip."""
    rep = SeedReport(st.seed)
    cfg = st.cfg
    t0 = time.perf_counter()
    names = [n for n, on in (("taxonomy", "classify"), ("duality", "duality"), ("roundtrip", "roundtrip"))
             if cfg.enabled(on)]
    if st.env.kind is not Kind.SEMI_DISCRETE:
        for n in names:
            rep.checks.append(skipped(n, True, "shock features need the semi-discrete backend"))
        rep.timing["classify"] = time.perf_counter() - t0
        _save_stage(st, "classification", rep)
        return rep
    if st.df is None:
        for n in names:
            rep.checks.append(vacuous(n, True, f"no difference field: {st.df_error}"))
        rep.timing["classify"] = time.perf_counter() - t0
        _save_stage(st, "classification", rep)
        return rep
    df, graph = st.df, st.graph
    sample = _sample_points(st)
    roles = _role_points(st)
    everything = list(dict.fromkeys(sample + [p for v in roles.values() for p in v]))
    results = dict(zip(everything, classify_points(st, everything))) if cfg.enabled("classify") else {}
    tracers = {s: Tracers(df.field_for(s), cfg["tol.tie"]) for s in (Sign.MINUS, Sign.PLUS)}
    if cfg.enabled("classify"):
        errors = [r for r in results.values() if isinstance(r, str)]
        good = [(v, r) for v, r in results.items() if isinstance(r, ConfigClass)]
        rep.checks.append(CheckResult("taxonomy", True, _verdict(not errors), float(len(errors)),
                                      {"points": len(results), "errors": errors[:5]}))
        unsound = [v for v, c in good if (c.class_id in SIGNED_STABLE_CLASSES and c.unstable)
                   or (c.class_id in UNSTABLE_CLASSES and not c.unstable) or c.graph_agrees is False]
        rep.checks.append(CheckResult("taxonomy_soundness", True, _verdict(not unsound), float(len(unsound)),
                                      {"points": len(good)}))
        rep.checks.extend(_role_checks(roles, results))
        doubles = sum(1 for _, c in good if c.double_hugging)
        rep.checks.append(CheckResult("no_double_hugging", False, _verdict(doubles == 0), float(doubles),
                                      {"points": len(good)}))
        in_sample = set(sample)
        hist = Counter(c.class_id for v, c in good if v in in_sample)
        rep.classes = {str(k): hist[k] for k in sorted(hist)}
        borderline = sum(1 for _, c in good if c.borderline)
        rep.census = {"classified": len(good), "sampled": len(sample), "borderline": borderline}
        rows = []
        for v in sample:
            c = results.get(v)
            if not isinstance(c, ConfigClass):
                continue
            for sign in (Sign.MINUS, Sign.PLUS):
                age = detect_shock(tracers[sign].pf, v, cfg["tol.tie"], tracers=tracers[sign])
                if age is not None:
                    rows.append((v.level, v.x, sign.value, age, c.class_id))
        write_csv(st.dir / "shocks.csv", ["level", "x", "sign", "age", "class_id"], rows)
    if cfg.enabled("duality"):
        itfs = _interfaces(st, _interface_sources(st))
        rep.checks.extend(_interface_checks(st, itfs, tracers))
    if cfg.enabled("roundtrip"):
        check, doc = _roundtrip(st, results)
        rep.checks.append(check)
        write_json(doc, st.dir / "reconstruction.json", schema="island_reconstruction.v1.json")
    rep.timing["classify"] = time.perf_counter() - t0
    _save_stage(st, "classification", rep)
    return rep


# ---------------------------------------------------------------------------
# render


# heatmap columns per picture after block averaging
HEAT_COLUMNS = 200


def render(st: SeedState, timestamp: str | None = None) -> list[Path]:
    """Full-domain picture plus a close-up of the longest-lived island."""
    df, graph, env = st.df, st.graph, st.env
    if df is None:
        return []
    w = df.valid_width
    stride = max(1, w // HEAT_COLUMNS)
    heat = downsample(df.pf_minus.values[:, :w], stride)
    pts = [(k, int(x)) for k, row in enumerate(graph.points) for x in row.tolist()]
    full = Layers(df.n_levels, 0, w, heatmap=heat, heat_stride=stride, islands=graph.islands, points=pts,
                  meta={"seed": st.seed, "census_islands": len(graph.islands)})
    out = [render_svg(full, st.dir / "landscape.svg", timestamp=timestamp)]
    if graph.islands and env.kind is Kind.SEMI_DISCRETE:
        isl = max(graph.islands, key=lambda i: (i.lifetime, i.n_cells))
        pad = max(20, 2 * max(r - l for l, r in zip(isl.left, isl.right)))
        x0, x1 = max(0, min(isl.left) - pad), min(w, max(isl.right) + pad + 1)
        k0 = max(0, isl.levels[0] - 3)
        k1 = min(df.n_levels - 1, isl.levels[-1] + 3)
        itf = []
        for sign, side in ((Sign.MINUS, 0), (Sign.PLUS, 1)):
            cf = competition_field(env, df, isl.tip, sign, stop=k0)
            path = shock_interfaces_from_point(cf)[side]
            itf.append((sign.value, [(int(k) - k0, int(x)) for k, x in zip(path.levels, path.xs)]))
        geos = []
        for sign in (Sign.MINUS, Sign.PLUS):
            g = Tracers(df.field_for(sign), st.cfg["tol.tie"]).path(isl.bottom, Side.LEFTMOST).geodesic()
            line = []
            for k, a, b in g.runs:
                if k > k1:
                    break
                line += [(k - k0, a), (k - k0, b)]
            geos.append((sign.value, line))
        shifted = Island(tuple(k - k0 for k in isl.levels), isl.left, isl.right)
        near = [(k - k0, x) for k, x in pts if k0 <= k <= k1 and x0 <= x < x1]
        zstride = max(1, (x1 - x0) // HEAT_COLUMNS)
        zheat = downsample(df.pf_minus.values[k0:k1 + 1, x0:x1], zstride)
        zoom = Layers(k1 - k0 + 1, x0, x1, heatmap=zheat, heat_stride=zstride, islands=[shifted],
                      interfaces=itf, geodesics=geos, points=near,
                      meta={"seed": st.seed, "tip": [isl.tip.level, isl.tip.x], "level_offset": k0})
        out.append(render_svg(zoom, st.dir / "island.svg", width_px=900, height_px=600, timestamp=timestamp))
    return out


# ---------------------------------------------------------------------------
# whole run


def dimension_oracle(n_steps: int = 2 ** 20, n_bridges: int = 8, seed: int = 0) -> CheckResult:
    """Box-counting slope of random-walk bridge zero sets under the same estimator."""
    slopes = random_walk_dimension(n_steps, n_bridges, seed=seed)
    mean = float(np.mean(slopes))
    return CheckResult("dimension_oracle", False, _verdict(abs(mean - 0.5) <= 0.1), abs(mean - 0.5),
                       {"mean_slope": mean, "slopes": slopes, "steps": n_steps})


def merge(a: SeedReport, b: SeedReport) -> SeedReport:
    return SeedReport(a.seed, a.checks + b.checks, {**a.census, **{f"classify_{k}": v for k, v in b.census.items()}},
                      b.classes or a.classes, a.dims or b.dims, {**a.timing, **b.timing})


def run(cfg: RunConfig, root: Path | None = None, stages: tuple[str, ...] = ("simulate", "analyze", "classify",
                                                                              "render")) -> RunReport:
    """Run the enabled stages for every seed and write ``report.json``."""
    root = Path(root) if root is not None else cfg.out
    try:
        root.mkdir(parents=True, exist_ok=True)
        probe = root / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ParameterError(f"output directory {root} is not writable: {exc}") from exc
    (root / "config.txt").write_text(cfg.to_text())
    report = RunReport(cfg)
    if cfg.enabled("dimension") and "analyze" in stages:
        report.checks.append(dimension_oracle())
    for seed in cfg.seeds:
        t0 = time.perf_counter()
        st = simulate(cfg, seed, root) if "simulate" in stages else SeedState(cfg, seed, root)
        sim_time = time.perf_counter() - t0
        a = analyze(st) if "analyze" in stages else _load_stage(st, "analysis")
        c = classify(st) if "classify" in stages else _load_stage(st, "classification")
        srep = merge(a, c)
        srep.timing["simulate"] = sim_time
        if "render" in stages and cfg.enabled("render"):
            t1 = time.perf_counter()
            render(st)
            srep.timing["render"] = time.perf_counter() - t1
        report.seeds.append(srep)
    write_report(report, root)
    return report


def _load_stage(st: SeedState, name: str) -> SeedReport:
    path = st.dir / f"{name}.json"
    if not path.exists():
        return SeedReport(st.seed)
    doc = read_json(path)
    return SeedReport(doc["seed"], [CheckResult(c["name"], c["hard"], c["status"], c["max_defect"], c["detail"])
                                    for c in doc["checks"]], doc["census"], doc["classes"], doc["dims"])


def write_report(report: RunReport, root: Path) -> None:
    write_json(report.to_json(), root / "report.json", schema="run_report.v1.json")
    (root / "report.txt").write_text("\n".join(report.summary_lines()) + "\n")
    lines = [f"seed {s.seed} {k} {v:.3f}" for s in report.seeds for k, v in sorted(s.timing.items())]
    (root / "timing.txt").write_text("\n".join(lines) + "\n")


def load_report(root: Path, cfg: RunConfig) -> RunReport:
    """Rebuild a report from per-seed stage files."""
    report = RunReport(cfg)
    for seed in cfg.seeds:
        st = SeedState(cfg, seed, root)
        report.seeds.append(merge(_load_stage(st, "analysis"), _load_stage(st, "classification")))
    return report


__all__ = [
    "CheckResult", "RunReport", "SeedReport", "SeedState", "analyze", "classify", "count_crossings",
    "dimension_oracle", "island_census", "island_structure", "load_report", "render", "run", "seed_dir", "simulate",
    "write_report",
]
