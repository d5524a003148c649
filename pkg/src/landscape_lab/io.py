"""Deterministic JSON and CSV writers and schema validation."""

from __future__ import annotations

import csv
import json
import math
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

SCHEMAS = ("environment.v1.json", "instability_graph.v1.json", "island_reconstruction.v1.json",
           "run_report.v1.json")


def fmt(x: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return format(float(x), ".17g")


def plain(obj: Any) -> Any:
    """JSON-ready copy: numpy scalars become Python numbers, non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(doc: Any) -> str:
    """Canonical text: sorted keys, shortest round-trip float repr, trailing newline."""
    return json.dumps(plain(doc), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def write_json(doc: Any, path: str | Path, schema: str | None = None) -> Path:
    path = Path(path)
    doc = plain(doc)
    if schema is not None:
        validate(doc, schema)
    path.write_text(dumps(doc))
    return path


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())


@lru_cache(maxsize=None)
def _registry() -> Registry:
    pkg = resources.files("landscape_lab") / "schemas"
    pairs = []
    for name in SCHEMAS:
        doc = json.loads((pkg / name).read_text())
        pairs.append((doc["$id"], Resource.from_contents(doc)))
        pairs.append((name, Resource.from_contents(doc)))
    return Registry().with_resources(pairs)


def load_schema(name: str) -> dict:
    if name not in SCHEMAS:
        raise KeyError(f"unknown schema {name!r}")
    return json.loads((resources.files("landscape_lab") / "schemas" / name).read_text())


def validate(doc: Any, schema: str) -> None:
    """Raise ``jsonschema.ValidationError`` when ``doc`` does not match ``schema``."""
    Draft202012Validator(load_schema(schema), registry=_registry()).validate(doc)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """CSV with floats at 17 significant digits and ``\\n`` line endings."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path
