"""Finite-horizon Busemann functions from two far targets.

Two passage fields are solved to targets ``p_minus`` left of ``p_plus`` on the
top level. ``W^s(v; u) = G^s(v) - G^s(u)`` stands in for the Busemann function
of sign ``s`` and ``D(v) = G^-(v) - G^+(v)`` is the difference field whose
points of increase (along a level) make up the instability graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .environment import EnvironmentField, Kind, SitePoint
from .errors import DomainError, ParameterError
from .io import fmt, write_csv
from .lpp import PassageField, Sign, solve_to_target, tol_eq


@dataclass(frozen=True, eq=False)
class DifferenceField:
    """Pair of passage fields and their difference ``D = G^- - G^+``.

    ``D`` is ``nan`` wherever either target is unreachable. Columns
    ``0..valid_width-1`` are finite on every level.
    """

    pf_minus: PassageField
    pf_plus: PassageField
    anchor: SitePoint
    D: np.ndarray = field(repr=False)
    D0: float
    theta: float
    delta_sep: float

    @property
    def env(self) -> EnvironmentField:
        return self.pf_minus.env

    @property
    def n_levels(self) -> int:
        return self.D.shape[0]

    @property
    def valid_width(self) -> int:
        return self.pf_minus.target.x + 1

    def field_for(self, sign: Sign) -> PassageField:
        sign = Sign(sign)
        if sign is Sign.MINUS:
            return self.pf_minus
        if sign is Sign.PLUS:
            return self.pf_plus
        raise ParameterError("sign must be Minus or Plus")

    def profile_values(self, level: int) -> np.ndarray:
        """``D0 - D(x, level)`` on the finite columns: a nondecreasing profile."""
        return self.D0 - self.D[level, : self.valid_width]


def default_delta_sep(env: EnvironmentField) -> float:
    """Twice the square root of the horizon, in spatial units of the backend."""
    if env.kind is Kind.EXPONENTIAL:
        return 2.0 * math.sqrt(env.n_levels)
    return 2.0 * math.sqrt(env.n_levels * env.mesh)


def target_columns(env: EnvironmentField, theta: float, delta_sep: float) -> tuple[int, int]:
    """Top-level columns nearest to ``centre + theta * T -/+ delta_sep``.

    The centre is the spatial midpoint of the domain and ``T`` the number of
    levels above the bottom one.
    """
    if not delta_sep > 0:
        raise ParameterError("delta_sep must be positive")
    horizon = env.n_levels - 1
    if env.kind is Kind.EXPONENTIAL:
        centre = (env.width - 1) / 2.0
        cols = [centre + theta * horizon - delta_sep, centre + theta * horizon + delta_sep]
    else:
        centre = (env.width - 1) / 2.0
        shift = (theta * horizon) / env.mesh
        sep = delta_sep / env.mesh
        cols = [centre + shift - sep, centre + shift + sep]
    p_minus, p_plus = (int(math.floor(c + 0.5)) for c in cols)
    if p_minus == p_plus:
        raise ParameterError("targets collapse to the same column; increase delta_sep or mesh resolution")
    if p_minus < 0 or p_plus >= env.width:
        raise ParameterError("targets fall outside the domain; reduce delta_sep or theta")
    return p_minus, p_plus


def build_difference_field(env: EnvironmentField, horizon_level: int | None = None, theta: float = 0.0,
                           delta_sep: float | None = None, anchor: SitePoint | None = None) -> DifferenceField:
    """Solve both targets and form ``D``.

    The default anchor is level 0 at the midpoint of the columns that reach both
    targets.
    """
    top = env.n_levels - 1
    if horizon_level is None:
        horizon_level = top
    if horizon_level != top:
        raise ParameterError("horizon_level must be the top level")
    if delta_sep is None:
        delta_sep = default_delta_sep(env)
    p_minus, p_plus = target_columns(env, theta, delta_sep)
    pf_minus = solve_to_target(env, SitePoint(top, p_minus), Sign.MINUS)
    pf_plus = solve_to_target(env, SitePoint(top, p_plus), Sign.PLUS)
    with np.errstate(invalid="ignore"):
        D = pf_minus.values - pf_plus.values
    D[~(np.isfinite(pf_minus.values) & np.isfinite(pf_plus.values))] = np.nan
    D.flags.writeable = False
    if anchor is None:
        anchor = SitePoint(0, p_minus // 2)
    if not (0 <= anchor.level <= top and 0 <= anchor.x <= p_minus):
        raise ParameterError(f"anchor {anchor} cannot reach both targets")
    return DifferenceField(pf_minus, pf_plus, anchor, D, float(D[anchor.level, anchor.x]), float(theta),
                           float(delta_sep))


def busemann_value(df: DifferenceField, sign: Sign, v: SitePoint, u: SitePoint) -> float:
    """``W^sign(v; u) = G^sign(v) - G^sign(u)``."""
    pf = df.field_for(sign)
    for p in (v, u):
        if not pf.reachable(p):
            raise DomainError(f"{p} cannot reach the {Sign(sign).value} target")
    return pf.value(v) - pf.value(u)


def cocycle_defect(df: DifferenceField, sign: Sign, triples: Iterable[tuple[SitePoint, SitePoint, SitePoint]],
                   exact: bool = True) -> float:
    """Largest ``|W(v,u) + W(u,w) - W(v,w)|`` over the given triples.

    With ``exact=True`` the sum is taken over the stored passage values with
    ``math.fsum``, which is exact; otherwise the rounded ``W`` values are added
    in floating point, which shows the rounding of the subtractions.
    """
    pf = df.field_for(sign)
    worst = 0.0
    for v, u, w in triples:
        if exact:
            for p in (v, u, w):
                if not pf.reachable(p):
                    raise DomainError(f"{p} cannot reach the {Sign(sign).value} target")
            gv, gu, gw = pf.value(v), pf.value(u), pf.value(w)
            d = math.fsum([gv, -gu, gu, -gw, -gv, gw])
        else:
            d = busemann_value(df, sign, v, u) + busemann_value(df, sign, u, w) - busemann_value(df, sign, v, w)
        worst = max(worst, abs(d))
    return worst


def monotonicity_defect(df: DifferenceField) -> tuple[float, float]:
    """Largest increase of ``D`` along a level, raw and relative to ``tol_eq``.

    The second number is the worst ratio ``increase / tol_eq(G)``; the field is
    monotone within tolerance when it is at most 1.
    """
    w = df.valid_width
    D = df.D[:, :w]
    inc = np.diff(D, axis=1)
    scale = 1e-9 * (1.0 + np.maximum(np.abs(df.pf_minus.values[:, 1:w]), np.abs(df.pf_plus.values[:, 1:w])))
    raw = float(max(0.0, np.max(inc))) if inc.size else 0.0
    rel = float(max(0.0, np.max(inc / scale))) if inc.size else 0.0
    return raw, rel


@dataclass
class GrowthReport:
    level: int
    slope_minus: float
    slope_plus: float
    n_sites: int

    @property
    def relative_gap(self) -> float:
        return abs(self.slope_minus - self.slope_plus) / max(abs(self.slope_minus), abs(self.slope_plus), 1e-300)


def regression_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of ``y`` against ``x``."""
    slope, _ = np.polyfit(np.asarray(x, float), np.asarray(y, float), 1)
    return float(slope)


def central_half_slope(coords: np.ndarray, values: np.ndarray, min_sites: int = 100) -> float:
    ok = np.isfinite(values)
    coords, values = coords[ok], values[ok]
    if coords.size < min_sites:
        raise DomainError(f"need at least {min_sites} finite sites, got {coords.size}")
    n = coords.size
    lo, hi = n // 4, n - n // 4
    return regression_slope(coords[lo:hi], values[lo:hi])


def check_growth(df: DifferenceField, level: int, min_sites: int = 100) -> GrowthReport:
    """Slope of ``x -> W^s((x, level); anchor)`` over the central half of the finite sites."""
    w = df.valid_width
    coords = np.asarray(df.env.coord(np.arange(w)), float)
    slopes = []
    for sign in (Sign.MINUS, Sign.PLUS):
        pf = df.field_for(sign)
        vals = pf.values[level, :w] - pf.value(df.anchor)
        slopes.append(central_half_slope(coords, vals, min_sites))
    return GrowthReport(level, slopes[0], slopes[1], w)


def write_difference_csv(df: DifferenceField, path: str | Path, levels: Iterable[int] | None = None) -> Path:
    """Rows ``level, x, G_minus, G_plus, D`` over the finite columns."""
    levels = range(df.n_levels) if levels is None else levels
    w = df.valid_width
    gm, gp = df.pf_minus.values, df.pf_plus.values
    rows = ((k, x, gm[k, x], gp[k, x], df.D[k, x]) for k in levels for x in range(w))
    return write_csv(path, ["level", "x", "G_minus", "G_plus", "D"], rows)


def difference_summary(df: DifferenceField, growth_level: int | None = None) -> dict:
    """``{D0, slopes, monotonicity}`` summary for JSON export."""
    raw, rel = monotonicity_defect(df)
    summary = {
        "D0": df.D0,
        "anchor": {"level": df.anchor.level, "x": df.anchor.x},
        "targets": {"minus": df.pf_minus.target.x, "plus": df.pf_plus.target.x},
        "theta": df.theta,
        "delta_sep": df.delta_sep,
        "monotonicity": {"max_defect": raw, "max_defect_over_tol": rel},
        "slopes": None,
    }
    level = df.anchor.level if growth_level is None else growth_level
    try:
        g = check_growth(df, level)
        summary["slopes"] = {"level": g.level, "minus": g.slope_minus, "plus": g.slope_plus}
    except DomainError:
        pass
    return summary


def anchor_shift_invariance(df: DifferenceField, new_anchor: SitePoint) -> float:
    """Largest change in the level increments of ``D0 - D`` when the anchor moves.

    Moving the anchor shifts the profile by a constant, so the increments and
    hence the instability graph should not change.
    """
    w = df.valid_width
    a = np.diff(df.D0 - df.D[:, :w], axis=1)
    d1 = float(df.D[new_anchor.level, new_anchor.x])
    b = np.diff(d1 - df.D[:, :w], axis=1)
    return float(np.max(np.abs(a - b)))


def unbounded_levels(df: DifferenceField, levels: Sequence[int], tol_flat: float) -> list[int]:
    """Levels among ``levels`` where ``D0 - D`` fails to take both signs at the window ends.

    A finite window can miss the sign change, so this is reported, not asserted.
    """
    w = df.valid_width
    out = []
    for k in levels:
        prof = df.D0 - df.D[k, :w]
        if not (prof[0] < -tol_flat and prof[-1] > tol_flat):
            out.append(int(k))
    return out


__all__ = [
    "DifferenceField", "GrowthReport", "anchor_shift_invariance", "build_difference_field", "busemann_value",
    "central_half_slope", "check_growth", "cocycle_defect", "default_delta_sep", "difference_summary", "fmt",
    "monotonicity_defect", "regression_slope", "target_columns", "tol_eq", "unbounded_levels",
    "write_difference_csv",
]
