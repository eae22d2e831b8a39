import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harmonize.config import OUTPUT_ENV, RunConfig, Tolerances, config_from_dict, load_config
from harmonize.errors import ConfigError, MissingInputError, TableFormatError
from harmonize.io import dumps, format_value, parse_float, read_table, sha256, to_jsonable, write_table
from harmonize.pipeline import build_manifest


@pytest.mark.parametrize("value, text", [
    (None, "NA"), (float("nan"), "NA"), (-0.0, "0.0"), (0.1, "0.1"), (3, "3"),
    (np.int64(7), "7"), (np.float32(0.5), "0.5"), (True, "true"), ("abc", "abc"),
])
def test_format_value(value, text):
    assert format_value(value) == text


@settings(max_examples=200, deadline=None)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_text_round_trip(x):
    assert parse_float(format_value(x)) == x


@pytest.mark.parametrize("text", ["", "NA", "nan", None])
def test_parse_missing(text):
    assert math.isnan(parse_float(text))


def test_parse_rejects_garbage():
    with pytest.raises(TableFormatError):
        parse_float("twelve")


def test_table_round_trip(tmp_path):
    p = write_table(tmp_path / "t.csv", ["a", "b"], [[1, 0.25], ["x", None]])
    assert p.read_text() == "a,b\n1,0.25\nx,NA\n"
    assert read_table(p, ["a"]) == [{"a": "1", "b": "0.25"}, {"a": "x", "b": "NA"}]
    with pytest.raises(TableFormatError):
        read_table(p, ["c"])
    with pytest.raises(MissingInputError):
        read_table(tmp_path / "absent.csv")


def test_json_is_sorted_and_nan_free():
    text = dumps({"b": float("nan"), "a": np.arange(2), "c": (np.float64(1.5), np.bool_(True))})
    assert json.loads(text) == {"a": [0, 1], "b": None, "c": [1.5, True]}
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert to_jsonable(float("inf")) is None


def test_defaults_are_valid():
    cfg = config_from_dict({})
    assert cfg.seed == 0 and cfg.season_rule == "december-own-year"
    assert cfg.coordinate_unit == "projected-units"


@pytest.mark.parametrize("doc", [
    {"sede": 1}, {"seed": -1}, {"seed": True}, {"season_rule": "solstice"},
    {"wd_convention": "clockwise"}, {"magnus": {"a": -1}}, {"magnus": {"c": 1}},
    {"tuning": {"seed": 4}}, {"tuning": {"folds": 1}}, {"tolerances": {"rake_tol": 0}},
    {"tolerances": {"fidelity_threshold": 2}}, {"unit_rules": {"t2m": "F_to_C"}},
    {"coordinate_unit": ""}, {"workers": 0}, [],
])
def test_invalid_configs_raise(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_load_config_with_overrides(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"seed": 1, "tuning": {"folds": 4}}))
    cfg = load_config(p, {"seed": 9, "tuning.nmax_grid": [8], "workers": None})
    assert cfg.seed == 9 and cfg.tuning.folds == 4 and cfg.tuning.nmax_grid == (8,)
    assert cfg.tuning_for(2).seed == 11


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_output_dir_environment_override(tmp_path, monkeypatch):
    cfg = RunConfig(paths={"output": "from-config"})
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    assert str(cfg.output_dir) == "from-config"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    assert cfg.output_dir == tmp_path


def test_manifest_records_settings_and_hashes(tmp_path):
    f = tmp_path / "in.csv"
    f.write_text("a\n1\n")
    cfg = RunConfig(seed=5, coordinate_unit="m", tolerances=Tolerances(gvf_band=0.1))
    m = build_manifest("x", cfg, {"input": f}, {}, {"k": 1})
    s = m["config"]["settings"]
    assert s["coordinate_unit"]["value"] == "m"
    assert s["tolerances.gvf_band"]["value"] == 0.1
    assert all(entry["origin"] for entry in s.values())
    assert m["inputs"]["input"]["sha256"] == sha256(f)
    assert str(tmp_path) not in dumps(m)
