"""Standalone SVG rendering of passage heatmaps, islands, interfaces, geodesics and points.

Layers are drawn bottom to top in the order of ``LAYER_ORDER``. Colours come
from the fixed ``STYLE`` table so repeated renders look the same.
"""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import ParameterError
from .instability import Island

LAYER_ORDER = ("heatmap", "islands", "interfaces", "geodesics", "points")

STYLE: dict[str, object] = {
    "background": "#ffffff",
    # dark to light; luminance increases along the ramp
    "ramp": ("#440154", "#3b528b", "#21918c", "#5ec962", "#fde725"),
    "island_fill": "#f4a259",
    "island_stroke": "#8c4a12",
    "island_opacity": 0.75,
    "interface": {"Minus": "#1f4e9c", "Plus": "#c0392b"},
    "geodesic": {"Minus": "#1b7f3b", "Plus": "#7d3c98"},
    "point": "#111111",
    "line_width": 1.0,
}

Polyline = Sequence[tuple[int, int]]


@dataclass
class Layers:
    """Inputs for :func:`render_svg`. ``None`` or empty means the layer is absent.

    ``heatmap`` is a ``(levels, columns)`` array aligned with ``x_start`` and a
    column stride ``heat_stride``. Polylines and points use ``(level, x)``.
    """

    n_levels: int
    x_start: int
    x_stop: int
    heatmap: np.ndarray | None = None
    heat_stride: int = 1
    islands: Sequence[Island] = ()
    interfaces: Sequence[tuple[str, Polyline]] = ()
    geodesics: Sequence[tuple[str, Polyline]] = ()
    points: Sequence[tuple[int, int]] = ()
    meta: dict = field(default_factory=dict)

    def present(self) -> list[str]:
        out = []
        if self.heatmap is not None and self.heatmap.size:
            out.append("heatmap")
        for name in LAYER_ORDER[1:]:
            if len(getattr(self, name)):
                out.append(name)
        return out


def _hex(rgb: np.ndarray) -> str:
    r, g, b = (int(round(float(c))) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def _rgb(code: str) -> np.ndarray:
    return np.array([int(code[i: i + 2], 16) for i in (1, 3, 5)], float)


def ramp_colour(t: float, ramp: Sequence[str] | None = None) -> str:
    """Colour at position ``t`` in ``[0, 1]`` by piecewise-linear interpolation."""
    ramp = STYLE["ramp"] if ramp is None else ramp
    t = min(1.0, max(0.0, float(t)))
    pos = t * (len(ramp) - 1)
    i = min(int(pos), len(ramp) - 2)
    frac = pos - i
    return _hex((1 - frac) * _rgb(ramp[i]) + frac * _rgb(ramp[i + 1]))


def luminance(code: str) -> float:
    r, g, b = _rgb(code) / 255.0
    return 0.2126 * r + 0.7152 * g + 0.0722 * b


def heat_levels(values: np.ndarray) -> np.ndarray:
    """Normalise finite values to ``[0, 1]``; non-finite entries stay ``nan``."""
    v = np.asarray(values, float)
    ok = np.isfinite(v)
    out = np.full(v.shape, np.nan)
    if not ok.any():
        return out
    lo, hi = float(v[ok].min()), float(v[ok].max())
    out[ok] = 0.5 if hi == lo else (v[ok] - lo) / (hi - lo)
    return out


def downsample(values: np.ndarray, stride: int) -> np.ndarray:
    """Column-block means with block width ``stride``; a block with a non-finite entry stays non-finite."""
    if stride <= 1:
        return np.asarray(values, float)
    n, m = values.shape
    cut = (m // stride) * stride
    blocks = values[:, :cut].reshape(n, m // stride, stride)
    with np.errstate(invalid="ignore"):
        out = blocks.mean(axis=2)
    return out


class _Frame:
    def __init__(self, layers: Layers, width_px: float, height_px: float):
        self.x0 = layers.x_start
        self.n = layers.n_levels
        self.sx = width_px / max(1, layers.x_stop - layers.x_start)
        self.sy = height_px / max(1, layers.n_levels)

    def px(self, level: float, x: float) -> tuple[float, float]:
        """Centre of cell ``(level, x)``; level 0 at the bottom."""
        return ((x - self.x0 + 0.5) * self.sx, (self.n - 1 - level + 0.5) * self.sy)

    def poly(self, pts: Polyline) -> str:
        return " ".join(f"{a:.3f},{b:.3f}" for a, b in (self.px(k, x) for k, x in pts))


def island_outline(isl: Island) -> list[tuple[int, int]]:
    """Left boundary from bottom to tip followed by the right boundary from tip to bottom."""
    left = list(zip(isl.levels, isl.left))
    right = list(zip(isl.levels, isl.right))
    return left + right[::-1]


def render_svg(layers: Layers, path: str | Path, style: dict | None = None, width_px: float = 1600.0,
               height_px: float = 800.0, timestamp: str | None = None) -> Path:
    """Write a standalone SVG. Metadata carries the island count and layer list."""
    style = STYLE if style is None else style
    present = layers.present()
    if not present:
        raise ParameterError("no layers to render")
    fr = _Frame(layers, width_px, height_px)
    stamp = timestamp if timestamp is not None else _dt.datetime.now(_dt.timezone.utc).isoformat()
    meta = {"islands": len(layers.islands), "layers": present, "levels": layers.n_levels,
            "x_range": [layers.x_start, layers.x_stop], "generated": stamp, **layers.meta}
    lw = style["line_width"]
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px:g}" height="{height_px:g}" '
        f'viewBox="0 0 {width_px:g} {height_px:g}">',
        f"<metadata>{escape(json.dumps(meta, sort_keys=True))}</metadata>",
        f'<rect id="background" x="0" y="0" width="{width_px:g}" height="{height_px:g}" fill="{style["background"]}"/>',
    ]
    if "heatmap" in present:
        h = heat_levels(layers.heatmap)
        n, m = h.shape
        cw = layers.heat_stride * fr.sx
        out.append(f'<g id="heatmap" data-cells="{int(np.isfinite(h).sum())}">')
        for k in range(n):
            y = (fr.n - 1 - k) * fr.sy
            for c in range(m):
                if np.isfinite(h[k, c]):
                    out.append(f'<rect x="{c * cw:.3f}" y="{y:.3f}" width="{cw:.3f}" height="{fr.sy:.3f}" '
                               f'fill="{ramp_colour(h[k, c], style["ramp"])}" data-value="{h[k, c]:.6f}"/>')
        out.append("</g>")
    if "islands" in present:
        out.append(f'<g id="islands" data-count="{len(layers.islands)}" fill="{style["island_fill"]}" '
                   f'stroke="{style["island_stroke"]}" stroke-width="{lw / 2:g}" '
                   f'fill-opacity="{style["island_opacity"]}">')
        for i, isl in enumerate(layers.islands):
            out.append(f'<polygon data-island="{i}" points="{fr.poly(island_outline(isl))}"/>')
        out.append("</g>")
    for name in ("interfaces", "geodesics"):
        if name in present:
            colours = style["interface" if name == "interfaces" else "geodesic"]
            out.append(f'<g id="{name}" fill="none" stroke-width="{lw:g}">')
            for sign, line in getattr(layers, name):
                out.append(f'<polyline data-sign="{sign}" stroke="{colours[sign]}" points="{fr.poly(line)}"/>')
            out.append("</g>")
    if "points" in present:
        w = max(fr.sx, 0.5)
        h = max(fr.sy * 0.6, 0.5)
        segs = []
        for k, x in layers.points:
            a, b = fr.px(k, x)
            segs.append(f"M{a - w / 2:.2f} {b - h / 2:.2f}h{w:.2f}v{h:.2f}h{-w:.2f}z")
        out.append(f'<g id="points" data-count="{len(layers.points)}">'
                   f'<path fill="{style["point"]}" d="{"".join(segs)}"/></g>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
