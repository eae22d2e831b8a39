import csv
import json

import pytest

from harmonize.cli import main
from harmonize.config import OUTPUT_ENV
from harmonize.geomcore import areas_to_geojson, discretize_block
from harmonize.io import write_table
from harmonize.kriging import default_spacing

from oracles import dense_block_kriging, exponential_cov


@pytest.fixture(autouse=True)
def no_env_output(monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def krige_inputs(tmp_path, grid6, four_blocks):
    field = write_table(tmp_path / "field.csv", ["variable", "year", "x", "y", "value"],
                        [("z", 2020, x, y, v) for (x, y), v in zip(grid6.coords, grid6.values)])
    areas = tmp_path / "areas.geojson"
    areas.write_text(json.dumps(areas_to_geojson(four_blocks)))
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 1, "tuning": {"families": ["exponential"], "nmax_grid": [36]}}))
    return field, areas, cfg


def test_unknown_command_is_usage_error(capsys):
    assert main(["frobnicate"]) == 2


def test_missing_required_flag_is_usage_error():
    assert main(["krige", "--areas", "a.geojson"]) == 2


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"unknown_key": 1}))
    assert main(["validate", "--panel", "p.csv", "--config", str(cfg), "--out", str(tmp_path)]) == 3
    diag = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert diag["error"] == "ConfigError"


def test_missing_input_exit_code(tmp_path):
    assert main(["validate", "--panel", str(tmp_path / "absent.csv"), "--out", str(tmp_path)]) == 4


def test_krige_matches_dense_oracle(tmp_path, krige_inputs, grid6, four_blocks):
    field, areas, cfg = krige_inputs
    out = tmp_path / "out"
    assert main(["krige", "--field", str(field), "--areas", str(areas), "--config", str(cfg),
                 "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    chosen = manifest["results"]["kriging"]["z"]["2020"]
    assert (chosen["family"], chosen["nmax"]) == ("exponential", 36)
    vg = chosen["variogram"]
    cov = lambda h: float(exponential_cov(h, vg["nugget"], vg["psill"], vg["range"]))  # noqa: E731
    preds = {r["area_id"]: r for r in read_csv(out / "predictions.csv")}
    assert sorted(preds) == ["B1", "B2", "B3", "B4"]
    for block in four_blocks:
        bp = discretize_block(block, default_spacing(block))
        mean, var, _ = dense_block_kriging(cov, grid6.coords, grid6.values, bp)
        assert float(preds[block.id]["mean"]) == pytest.approx(mean, rel=1e-8)
        assert float(preds[block.id]["variance"]) == pytest.approx(var, rel=1e-8, abs=1e-12)
        assert int(preds[block.id]["n_used"]) == 36
    assert {"predictions", "cv_table", "fidelity", "fragment"} == set(manifest["outputs"])


def test_output_directory_from_environment(tmp_path, krige_inputs, monkeypatch):
    field, areas, cfg = krige_inputs
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env-out"))
    assert main(["krige", "--field", str(field), "--areas", str(areas), "--config", str(cfg),
                 "--out", str(tmp_path / "ignored")]) == 0
    assert (tmp_path / "env-out" / "predictions.csv").is_file()
    assert not (tmp_path / "ignored").exists()


def write_panel(path, rh):
    write_table(path, ["area_id", "year", "variable", "value", "source"],
                [("A1", 2015, "rh_mean", rh, "era5"), ("A1", 2015, "t2m_mean", 9.0, "era5")])


@pytest.mark.parametrize("rh, strict, code, count", [
    (150.0, True, 5, 1), (150.0, False, 0, 1), (70.0, True, 0, 0),
])
def test_validate_strict(tmp_path, rh, strict, code, count):
    panel = tmp_path / "panel.csv"
    write_panel(panel, rh)
    argv = ["validate", "--panel", str(panel), "--out", str(tmp_path / "v")] + (["--strict"] if strict else [])
    assert main(argv) == code
    assert len(read_csv(tmp_path / "v" / "violations.csv")) == count


def test_panel_build_from_fragments(tmp_path):
    a = write_table(tmp_path / "a.csv", ["area_id", "year", "variable", "value"],
                    [("A1", 2015, "x", 1.0), ("A2", 2015, "x", 2.0)])
    b = write_table(tmp_path / "b.csv", ["area_id", "year", "variable", "value"], [("A1", 2016, "y", 3.0)])
    out = tmp_path / "p"
    assert main(["panel-build", "--fragment", f"one={a}", "--fragment", f"two={b}",
                 "--years", "2015-2016", "--out", str(out)]) == 0
    wide = read_csv(out / "panel_wide.csv")
    assert [(r["area_id"], r["year"], r["x"], r["y"]) for r in wide] == [
        ("A1", "2015", "1.0", "NA"), ("A1", "2016", "NA", "3.0"),
        ("A2", "2015", "2.0", "NA"), ("A2", "2016", "NA", "NA")]


def test_panel_build_collision_is_error(tmp_path):
    a = write_table(tmp_path / "a.csv", ["area_id", "year", "variable", "value"], [("A1", 2015, "x", 1.0)])
    assert main(["panel-build", "--fragment", f"one={a}", "--fragment", f"two={a}",
                 "--out", str(tmp_path / "p")]) == 1


@pytest.mark.slow
def test_demo_runs_clean(tmp_path):
    out = tmp_path / "demo"
    assert main(["demo", "--strict", "--seed", "3", "--out", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["results"]["validate"]["violations"] == 0
    assert (out / "panel" / "panel_wide.csv").is_file()
    assert len(manifest["results"]["panel"]["years"]) == 5
    assert manifest["results"]["panel"]["areas"] == 256
