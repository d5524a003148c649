from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from jsonschema import ValidationError

from landscape_lab.config import KEYS, PRESETS, RunConfig, build_config, load_config, parse_config_text
from landscape_lab.environment import gen_environment
from landscape_lab.errors import ConfigError, ParameterError
from landscape_lab.io import SCHEMAS, dumps, fmt, load_schema, read_json, validate, write_csv, write_json

# ---------------------------------------------------------------------------
# configuration


def test_defaults_cover_every_key():
    cfg = build_config({})
    assert set(cfg.values) == set(KEYS)
    assert cfg["env.kind"] == "SemiDiscrete" and cfg["busemann.delta_sep"] is None
    assert cfg.seeds == (1,) and cfg.threads == 1


def test_unknown_keys_are_all_listed():
    with pytest.raises(ConfigError) as info:
        build_config({"env.nlevels": "3", "tol.flatness": "1e-3", "env.mesh": "abc"})
    probs = "\n".join(info.value.problems)
    assert "env.nlevels" in probs and "tol.flatness" in probs and "env.mesh" in probs
    assert len(info.value.problems) == 3
    assert isinstance(info.value, ParameterError)


@pytest.mark.parametrize("key,value", [
    ("tol.flat", "0"), ("tol.eq", "-1"), ("env.n_levels", "0"), ("run.threads", "0"),
    ("analysis.tol_flat_factors", "1,-2"), ("run.seeds", "1,-1"), ("analysis.render", "maybe"),
    ("env.kind", "Poisson"), ("busemann.anchor", "3"),
])
def test_invalid_values_rejected(key, value):
    with pytest.raises(ConfigError):
        build_config({key: value})


def test_flat_tolerance_not_below_equality_tolerance():
    with pytest.raises(ConfigError, match="tol.flat"):
        build_config({"tol.eq": "1e-6", "tol.flat": "1e-8"})


def test_sections_prefix_keys():
    raw = parse_config_text("# comment\n[env]\nn_levels = 12\nmesh = 0.05  # inline\n\n[run]\nseeds = 1, 2\n"
                            "busemann.theta = 0.2\n")
    assert raw == {"env.n_levels": "12", "env.mesh": "0.05", "run.seeds": "1, 2", "busemann.theta": "0.2"}
    cfg = build_config(raw)
    assert cfg["env.n_levels"] == 12 and cfg.seeds == (1, 2) and cfg["busemann.theta"] == 0.2


def test_malformed_lines_rejected():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("env.n_levels = 3\nnot a pair\n")


def test_presets_and_precedence(tmp_path):
    for name in PRESETS:
        load_config(preset=name)
    path = tmp_path / "c.txt"
    path.write_text("env.n_levels = 7\nrun.seeds = 4\n")
    cfg = load_config(path, "smoke", {"run.seeds": "9"})
    assert cfg["env.n_levels"] == 7 and cfg["env.mesh"] == 0.01 and cfg.seeds == (9,)
    with pytest.raises(ConfigError, match="unknown preset"):
        load_config(preset="huge")


def test_text_round_trip():
    cfg = load_config(preset="acceptance", overrides={"busemann.anchor": "3,40", "busemann.delta_sep": "0.25"})
    again = build_config(parse_config_text(cfg.to_text()))
    assert again.values == cfg.values
    assert again.anchor.level == 3 and again.anchor.x == 40


def test_thread_cap_from_environment(monkeypatch):
    cfg = build_config({"run.threads": "8"})
    monkeypatch.setenv("LANDSCAPE_LAB_THREADS", "2")
    assert cfg.threads == 2
    monkeypatch.delenv("LANDSCAPE_LAB_THREADS")
    assert cfg.threads == 8


def test_env_params_follow_the_kind():
    cfg = build_config({"env.kind": "Exponential", "env.n_cols": "5"})
    assert cfg.env_params == {"kind": "Exponential", "n_levels": 200, "n_cols": 5, "rate": 1.0}
    assert isinstance(cfg, RunConfig)


# ---------------------------------------------------------------------------
# serialization


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_csv_floats_round_trip(x):
    assert float(fmt(x)) == x


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_json_floats_round_trip(x):
    assert json.loads(dumps({"v": x}))["v"] == x


def test_non_finite_values_become_null():
    doc = {"a": float("nan"), "b": [np.inf, np.float64(2.5), np.int64(3)], "c": np.array([1.0, -np.inf])}
    assert json.loads(dumps(doc)) == {"a": None, "b": [None, 2.5, 3], "c": [1.0, None]}


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": [True, None]}) == '{"a":[true,null],"b":1}\n'


def test_csv_format(tmp_path):
    path = write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 0.1], [2, np.float64(1 / 3)]])
    assert path.read_bytes() == b"a,b\n1,0.10000000000000001\n2,0.33333333333333331\n"


def test_every_schema_loads():
    for name in SCHEMAS:
        assert load_schema(name)["$id"]
    with pytest.raises(KeyError):
        load_schema("nothing.json")


def test_environment_header_matches_schema(tmp_path):
    env = gen_environment({"kind": "SemiDiscrete", "seed": 1, "n_levels": 2, "mesh": 0.5, "x_min": 0, "x_max": 1})
    head, _ = env.save(tmp_path / "env")
    doc = read_json(head)
    validate(doc, "environment.v1.json")
    bad = dict(doc)
    del bad["prng_id"]
    with pytest.raises(ValidationError):
        validate(bad, "environment.v1.json")


def test_graph_matches_schema(small_run):
    _, _, g = small_run
    validate(json.loads(dumps(g.to_json())), "instability_graph.v1.json")
    with pytest.raises(ValidationError):
        validate({"islands": "none"}, "instability_graph.v1.json")


def test_write_json_validates_before_writing(tmp_path):
    with pytest.raises(ValidationError):
        write_json({"passed": "yes"}, tmp_path / "r.json", schema="run_report.v1.json")
    assert not (tmp_path / "r.json").exists()
