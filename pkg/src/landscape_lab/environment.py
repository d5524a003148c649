"""Seeded random environments for the two LPP backends.

Two kinds are supported:

* ``Exponential``: i.i.d. exponential weights on an ``n_levels x n_cols`` grid.
* ``SemiDiscrete``: one Brownian path per level, sampled on a spatial mesh
  through i.i.d. Gaussian increments of variance ``mesh``.

Randomness comes from numpy's Philox counter-based generator so a field is a
pure function of ``(kind, seed, params)``.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParameterError

PRNG_ID = f"numpy.Philox4x64-10/numpy-{np.__version__}"
FORMAT_VERSION = 1


class Kind(str, enum.Enum):
    EXPONENTIAL = "Exponential"
    SEMI_DISCRETE = "SemiDiscrete"


@dataclass(frozen=True, order=True)
class SitePoint:
    """A space-time site: ``level`` is the time index, ``x`` the column or mesh index."""

    level: int
    x: int


def mesh_size(x_min: float, x_max: float, mesh: float) -> int:
    """Number of mesh points ``floor((x_max - x_min)/mesh) + 1``, robust to float fuzz."""
    ratio = (x_max - x_min) / mesh
    return int(math.floor(ratio + 1e-9)) + 1


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EnvironmentField:
    """Immutable weight field.

    For the exponential kind ``weights[level, col]`` holds the site weights.
    For the semi-discrete kind ``increments[level, i]`` is ``B(x_{i+1}) - B(x_i)``
    and ``paths[level]`` is the cumulative Brownian path with ``paths[level, 0] = 0``.
    """

    kind: Kind
    seed: int
    params: dict[str, Any]
    weights: np.ndarray | None = field(default=None, repr=False)
    increments: np.ndarray | None = field(default=None, repr=False)
    paths: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_levels(self) -> int:
        return int(self.params["n_levels"])

    @property
    def width(self) -> int:
        """Number of columns (discrete) or mesh points per level (semi-discrete)."""
        if self.kind is Kind.EXPONENTIAL:
            return int(self.params["n_cols"])
        return mesh_size(self.params["x_min"], self.params["x_max"], self.params["mesh"])

    @property
    def mesh(self) -> float:
        return float(self.params.get("mesh", 1.0))

    @property
    def x_min(self) -> float:
        return float(self.params.get("x_min", 0.0))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_levels, self.width)

    def coord(self, x: int | np.ndarray) -> float | np.ndarray:
        """Spatial coordinate of a column / mesh index."""
        return self.x_min + np.asarray(x) * self.mesh

    def contains(self, p: SitePoint) -> bool:
        return 0 <= p.level < self.n_levels and 0 <= p.x < self.width

    @property
    def identity(self) -> str:
        return json.dumps({"kind": self.kind.value, "seed": self.seed, "params": self.params}, sort_keys=True)

    def header(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "seed": int(self.seed),
            "params": dict(self.params),
            "prng_id": PRNG_ID,
            "format_version": FORMAT_VERSION,
        }

    def save(self, stem: str | Path) -> tuple[Path, Path]:
        """Write ``<stem>.json`` (header) and ``<stem>.bin`` (float64 little-endian, row-major).

        The blob holds ``weights`` for the exponential kind and ``increments`` for
        the semi-discrete kind.
        """
        stem = Path(stem)
        blob = self.weights if self.kind is Kind.EXPONENTIAL else self.increments
        hdr = self.header()
        hdr["blob"] = {"dtype": "<f8", "shape": list(blob.shape), "order": "C"}
        head_path = stem.with_suffix(".json")
        bin_path = stem.with_suffix(".bin")
        head_path.write_text(json.dumps(hdr, indent=2, sort_keys=True) + "\n")
        bin_path.write_bytes(np.asarray(blob, dtype="<f8").tobytes(order="C"))
        return head_path, bin_path


def _validate(params: dict[str, Any]) -> tuple[Kind, dict[str, Any]]:
    try:
        kind = Kind(params["kind"])
    except (KeyError, ValueError) as exc:
        raise ParameterError(f"unknown or missing kind: {params.get('kind')!r}") from exc
    n_levels = int(params.get("n_levels", 0))
    if n_levels <= 0:
        raise ParameterError("n_levels must be positive")
    if kind is Kind.EXPONENTIAL:
        n_cols = int(params.get("n_cols", 0))
        rate = float(params.get("rate", 1.0))
        if n_cols <= 0:
            raise ParameterError("n_cols must be positive")
        if not rate > 0:
            raise ParameterError("rate must be positive")
        return kind, {"n_levels": n_levels, "n_cols": n_cols, "rate": rate}
    mesh = float(params.get("mesh", 0.0))
    x_min = float(params.get("x_min", 0.0))
    x_max = float(params.get("x_max", 0.0))
    if not mesh > 0:
        raise ParameterError("mesh must be positive")
    if not x_max > x_min:
        raise ParameterError("need x_min < x_max")
    return kind, {"n_levels": n_levels, "mesh": mesh, "x_min": x_min, "x_max": x_max}


def gen_environment(params: dict[str, Any]) -> EnvironmentField:
    """Generate a field from ``{kind, seed, n_levels, n_cols | mesh/x_min/x_max, rate}``."""
    kind, clean = _validate(params)
    seed = int(params.get("seed", 0))
    if seed < 0 or seed >= 2**64:
        raise ParameterError("seed must be a 64-bit unsigned integer")
    rng = _rng(seed)
    if kind is Kind.EXPONENTIAL:
        w = rng.exponential(1.0 / clean["rate"], size=(clean["n_levels"], clean["n_cols"]))
        return EnvironmentField(kind, seed, clean, weights=_frozen(w))
    m = mesh_size(clean["x_min"], clean["x_max"], clean["mesh"])
    inc = rng.normal(0.0, math.sqrt(clean["mesh"]), size=(clean["n_levels"], m - 1))
    return _semi_from_increments(seed, clean, inc)


def _semi_from_increments(seed: int, params: dict[str, Any], inc: np.ndarray) -> EnvironmentField:
    paths = np.zeros((inc.shape[0], inc.shape[1] + 1))
    np.cumsum(inc, axis=1, out=paths[:, 1:])
    return EnvironmentField(Kind.SEMI_DISCRETE, seed, params, increments=_frozen(inc), paths=_frozen(paths))


def from_weights(weights: np.ndarray, seed: int = 0) -> EnvironmentField:
    """Wrap a hand-built positive weight grid (used for fixtures and oracles)."""
    w = np.array(weights, dtype=float)
    if w.ndim != 2 or w.size == 0:
        raise ParameterError("weights must be a non-empty 2-d array")
    if not np.all(w > 0):
        raise ParameterError("weights must be strictly positive")
    params = {"n_levels": w.shape[0], "n_cols": w.shape[1], "rate": 1.0}
    return EnvironmentField(Kind.EXPONENTIAL, seed, params, weights=_frozen(w))


def from_increments(increments: np.ndarray, mesh: float = 1.0, x_min: float = 0.0, seed: int = 0) -> EnvironmentField:
    """Wrap hand-built Gaussian-like increments (one row per level)."""
    inc = np.array(increments, dtype=float)
    if inc.ndim != 2 or inc.shape[0] == 0:
        raise ParameterError("increments must be a 2-d array with at least one level")
    if not np.all(np.isfinite(inc)):
        raise ParameterError("increments must be finite")
    params = {"n_levels": inc.shape[0], "mesh": float(mesh), "x_min": float(x_min),
              "x_max": float(x_min + inc.shape[1] * mesh)}
    return _semi_from_increments(seed, params, inc)


def load_environment(stem: str | Path) -> EnvironmentField:
    """Read a field written by :meth:`EnvironmentField.save`."""
    stem = Path(stem)
    hdr = json.loads(stem.with_suffix(".json").read_text())
    if hdr.get("format_version") != FORMAT_VERSION:
        raise ParameterError(f"unsupported format_version {hdr.get('format_version')}")
    shape = tuple(hdr["blob"]["shape"])
    blob = np.frombuffer(stem.with_suffix(".bin").read_bytes(), dtype="<f8").reshape(shape).astype(float)
    kind = Kind(hdr["kind"])
    if kind is Kind.EXPONENTIAL:
        return EnvironmentField(kind, int(hdr["seed"]), hdr["params"], weights=_frozen(blob))
    return _semi_from_increments(int(hdr["seed"]), hdr["params"], blob)
