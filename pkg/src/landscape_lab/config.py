"""Run configuration: flat ``section.key = value`` text with named presets."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .environment import Kind, SitePoint
from .errors import ConfigError


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("auto", "none", "") else float(text)


def _anchor(text: str) -> tuple[int, int] | None:
    if text.strip().lower() in ("auto", "none", ""):
        return None
    k, x = (int(p) for p in text.split(","))
    return k, x


def _ints(text: str) -> tuple[int, ...]:
    out = tuple(int(p) for p in text.replace(" ", "").split(",") if p)
    if not out:
        raise ValueError("empty list")
    return out


def _floats(text: str) -> tuple[float, ...]:
    out = tuple(float(p) for p in text.replace(" ", "").split(",") if p)
    if not out:
        raise ValueError("empty list")
    return out


def _levels(text: str) -> str | tuple[int, ...]:
    low = text.strip().lower()
    if low in ("anchor", "all", "none"):
        return low
    return _ints(text)


# key -> (parser, default)
KEYS: dict[str, tuple[Callable[[str], Any], Any]] = {
    "env.kind": (lambda s: Kind(s.strip()).value, Kind.SEMI_DISCRETE.value),
    "env.n_levels": (int, 200),
    "env.mesh": (float, 1e-3),
    "env.x_min": (float, 0.0),
    "env.x_max": (float, 20.0),
    "env.n_cols": (int, 16),
    "env.rate": (float, 1.0),
    "busemann.theta": (float, 0.0),
    "busemann.delta_sep": (_optional_float, None),
    "busemann.anchor": (_anchor, None),
    "tol.eq": (float, 1e-9),
    "tol.tie": (float, 1e-9),
    "tol.flat": (float, 1e-8),
    "analysis.composition": (_bool, True),
    "analysis.cocycle": (_bool, True),
    "analysis.growth": (_bool, True),
    "analysis.islands": (_bool, True),
    "analysis.roundtrip": (_bool, True),
    "analysis.classify": (_bool, True),
    "analysis.duality": (_bool, True),
    "analysis.dimension": (_bool, True),
    "analysis.robustness": (_bool, True),
    "analysis.render": (_bool, True),
    "analysis.composition_pairs": (int, 100),
    "analysis.sample_points": (int, 2000),
    "analysis.geodesics": (int, 500),
    "analysis.interface_sources": (int, 20),
    "analysis.roundtrip_islands": (int, 200),
    "analysis.role_islands": (int, 300),
    "analysis.resolution": (int, 1),
    "analysis.tol_flat_factors": (_floats, (1.0, 10 ** 0.5, 10.0)),
    "analysis.csv_levels": (_levels, "anchor"),
    "run.seeds": (_ints, (1,)),
    "run.out": (str, "runs"),
    "run.threads": (int, 1),
}

PRESETS: dict[str, dict[str, str]] = {
    "smoke": {
        "env.n_levels": "40", "env.mesh": "0.01", "env.x_max": "20",
        "analysis.composition_pairs": "20", "analysis.sample_points": "300", "analysis.geodesics": "100",
        "analysis.interface_sources": "6", "analysis.roundtrip_islands": "40", "analysis.role_islands": "40",
        "run.seeds": "1",
    },
    "acceptance": {
        "env.n_levels": "200", "env.mesh": "0.001", "env.x_min": "0", "env.x_max": "20",
        "run.seeds": "1,2,3",
    },
    "atlas": {
        "env.n_levels": "200", "env.mesh": "0.001", "env.x_min": "0", "env.x_max": "40",
        "analysis.composition": "false", "analysis.robustness": "false",
        "run.seeds": "1,2,3,4",
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated settings for one run; ``values`` maps every known key to a parsed value."""

    values: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def env_params(self) -> dict[str, Any]:
        kind = self.values["env.kind"]
        base = {"kind": kind, "n_levels": self.values["env.n_levels"]}
        if kind == Kind.EXPONENTIAL.value:
            base.update(n_cols=self.values["env.n_cols"], rate=self.values["env.rate"])
        else:
            base.update(mesh=self.values["env.mesh"], x_min=self.values["env.x_min"], x_max=self.values["env.x_max"])
        return base

    @property
    def anchor(self) -> SitePoint | None:
        a = self.values["busemann.anchor"]
        return None if a is None else SitePoint(*a)

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.values["run.seeds"]

    @property
    def out(self) -> Path:
        return Path(self.values["run.out"])

    @property
    def threads(self) -> int:
        """Worker count, capped by ``LANDSCAPE_LAB_THREADS`` when set."""
        n = self.values["run.threads"]
        cap = os.environ.get("LANDSCAPE_LAB_THREADS")
        if cap:
            n = min(n, max(1, int(cap)))
        return max(1, n)

    def enabled(self, name: str) -> bool:
        return bool(self.values[f"analysis.{name}"])

    def with_overrides(self, raw: dict[str, str]) -> "RunConfig":
        return build_config(raw, base=self)

    def as_strings(self) -> dict[str, str]:
        return {k: _render(v) for k, v in sorted(self.values.items())}

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.as_strings().items())


def _render(v: Any) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config_text(text: str) -> dict[str, str]:
    """Raw ``key -> value`` pairs. ``[section]`` lines prefix the keys that follow."""
    out: dict[str, str] = {}
    problems = []
    section = ""
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            problems.append(f"line {n}: expected 'key = value'")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if section and "." not in key:
            key = f"{section}.{key}"
        out[key] = value
    if problems:
        raise ConfigError(problems)
    return out


def build_config(raw: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    """Parse and validate raw values on top of ``base`` (or the defaults)."""
    values = dict(base.values) if base is not None else {k: d for k, (_, d) in KEYS.items()}
    problems = []
    for key, text in raw.items():
        if key not in KEYS:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            values[key] = KEYS[key][0](str(text))
        except (ValueError, TypeError) as exc:
            problems.append(f"{key}: {exc}")
    problems += _check(values)
    if problems:
        raise ConfigError(problems)
    return RunConfig(values)


def _check(v: dict[str, Any]) -> list[str]:
    out = []
    for key in ("tol.eq", "tol.tie", "tol.flat"):
        if not v[key] > 0:
            out.append(f"{key} must be positive")
    if v["tol.flat"] < v["tol.eq"]:
        out.append("tol.flat must be at least tol.eq")
    for key in ("env.n_levels", "run.threads", "analysis.resolution"):
        if v[key] < 1:
            out.append(f"{key} must be at least 1")
    for key in ("analysis.composition_pairs", "analysis.sample_points", "analysis.geodesics",
                "analysis.interface_sources", "analysis.roundtrip_islands", "analysis.role_islands"):
        if v[key] < 0:
            out.append(f"{key} must be nonnegative")
    if any(f <= 0 for f in v["analysis.tol_flat_factors"]):
        out.append("analysis.tol_flat_factors must be positive")
    if any(s < 0 for s in v["run.seeds"]):
        out.append("run.seeds must be nonnegative")
    return out


def load_config(path: str | Path | None = None, preset: str | None = None,
                overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the preset, then the file, then explicit overrides."""
    raw: dict[str, str] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError([f"unknown preset {preset!r}; choose from {sorted(PRESETS)}"])
        raw.update(PRESETS[preset])
    if path is not None:
        raw.update(parse_config_text(Path(path).read_text()))
    raw.update(overrides or {})
    return build_config(raw)
