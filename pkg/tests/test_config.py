"""Configuration schema: strict parsing, collected violations, and the
emit-then-parse identity."""
from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcflow.config import (
    config_from_dict,
    default_config,
    dump_json,
    fmt17,
    parse_config,
    to_json,
)
from mcflow.errors import ConfigError, IoError


def test_defaults_validate():
    cfg = default_config()
    assert cfg.model.k == 4 and cfg.barriers.delta0 == 2e-05


def test_round_trip_identity(tmp_path):
    cfg = default_config()
    path = tmp_path / "cfg.json"
    dump_json(cfg.to_dict(), path)
    again = parse_config(path)
    assert again == cfg
    # serialization is a fixed point
    assert to_json(again.to_dict()) == to_json(cfg.to_dict())


def test_out_of_range_p_names_field_and_interval():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"model": {"p": 3.5}})
    msg = str(exc.value)
    assert "model.p" in msg and "(2, 3)" in msg


def test_all_violations_collected():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"model": {"p": 3.5}, "time": {"rtol": -1.0},
                          "mesh": {"ratio": 2.0}})
    assert len(exc.value.violations) == 3


def test_unknown_section_and_key_rejected():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"solver": {}, "model": {"kk": 4}})
    msg = str(exc.value)
    assert "solver" in msg and "model.kk" in msg


def test_type_errors_rejected():
    with pytest.raises(ConfigError) as exc:
        config_from_dict({"model": {"k": 4.5}, "time": {"max_steps": True}})
    msg = str(exc.value)
    assert "model.k" in msg and "time.max_steps" in msg


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IoError):
        parse_config(tmp_path / "absent.json")


def test_malformed_json_is_config_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(path)


@settings(max_examples=80, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt17_is_lossless(x):
    assert float(fmt17(x)) == x


def test_json_floats_have_full_precision(tmp_path):
    path = tmp_path / "f.json"
    dump_json({"a": 0.1 + 0.2, "b": 1e-300}, path)
    data = json.loads(path.read_text())
    assert data["a"] == 0.1 + 0.2 and data["b"] == 1e-300
