import csv
import json

import numpy as np
import pytest

from habitat_cd.cli import main
from habitat_cd.raster import CONTINUOUS, GeoGrid, read_raster, write_raster

from conftest import label_grid


def test_split(tmp_path):
    out = tmp_path / "split.csv"
    assert main(["split", "--extent", "1000", "1000", "--block-size", "100", "--seed", "3",
                 "--out", str(out)]) == 0
    with out.open() as fh:
        roles = [r["role"] for r in csv.DictReader(fh)]
    assert roles.count("train") == 70 and roles.count("test") == 15


def test_split_needs_extent(tmp_path):
    assert main(["split", "--out", str(tmp_path / "s.csv")]) == 2


def test_tile_then_mosaic(tmp_path, rs):
    values = rs.integers(0, 23, size=(500, 500)).astype(np.uint8)
    write_raster(label_grid(values), tmp_path / "l.tif")
    assert main(["tile", str(tmp_path / "l.tif"), "--out", str(tmp_path / "tiles")]) == 0
    assert len((tmp_path / "tiles" / "patch_index.csv").read_text().splitlines()) == 10
    assert main(["mosaic", str(tmp_path / "tiles"), "--out", str(tmp_path / "m.tif")]) == 0
    np.testing.assert_array_equal(read_raster(tmp_path / "m.tif").values, values)


def test_terrain(tmp_path):
    z = np.add.outer(np.arange(6.0), np.arange(7.0))
    write_raster(GeoGrid.from_array(z, kind=CONTINUOUS, tag="DTM"), tmp_path / "dtm.tif")
    assert main(["terrain", "--dtm", str(tmp_path / "dtm.tif"), "--dsm",
                 str(tmp_path / "dtm.tif"), "--out", str(tmp_path / "t")]) == 0
    for name in ("slope", "aspect", "roughness", "curvature", "ndsm"):
        assert (tmp_path / "t" / f"{name}.tif").exists()


def test_remap_error_exit(tmp_path):
    write_raster(label_grid([[1, 99]]), tmp_path / "l.tif")
    assert main(["remap", str(tmp_path / "l.tif"), "--out", str(tmp_path / "r.tif")]) == 2
    assert main(["remap", str(tmp_path / "l.tif"), "--default", "pass",
                 "--out", str(tmp_path / "r.tif")]) == 0


def test_compare_and_metrics(tmp_path, rs):
    t1 = rs.integers(0, 23, size=(40, 40)).astype(np.uint8)
    t2 = t1.copy()
    t2[:5] = 13
    write_raster(label_grid(t1), tmp_path / "t1.tif")
    write_raster(label_grid(t2), tmp_path / "t2.tif")
    assert main(["compare", str(tmp_path / "t1.tif"), str(tmp_path / "t2.tif"),
                 "--out", str(tmp_path / "c.tif"), "--binary-out", str(tmp_path / "b.tif")]) == 0
    binary = read_raster(tmp_path / "b.tif").values
    np.testing.assert_array_equal(binary, t1 != t2)
    assert main(["metrics", str(tmp_path / "t2.tif"), str(tmp_path / "t2.tif"),
                 "--out", str(tmp_path / "m")]) == 0
    rep = json.loads((tmp_path / "m" / "report.json").read_text())
    assert rep["overall_accuracy"] == 1.0
    assert (tmp_path / "m" / "figures" / "confusion.png").exists()


def test_synth(tmp_path):
    spec = {"width": 40, "height": 30, "class_frequencies": [0.5, 0.5],
            "transition_events": [{"from_id": 0, "to_id": 1, "rate": 0.5}],
            "superpixel_size": 5, "seed": 0}
    (tmp_path / "spec.json").write_text(json.dumps(spec))
    assert main(["synth", "--spec", str(tmp_path / "spec.json"), "--out",
                 str(tmp_path / "s")]) == 0
    assert read_raster(tmp_path / "s" / "truth.tif").shape == (30, 40)
    (tmp_path / "bad.json").write_text(json.dumps({**spec, "class_frequencies": [0.5]}))
    assert main(["synth", "--spec", str(tmp_path / "bad.json")]) == 2


def test_run_bundled(tmp_path):
    assert main(["run", "--out", str(tmp_path / "r"), "--no-figures"]) == 0
    assert (tmp_path / "r" / "report.json").exists()


def test_run_bad_config(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"paradigm": "magic"}))
    assert main(["run", "--config", str(tmp_path / "c.json")]) == 2


def test_run_oracle_violation_exit(tmp_path, monkeypatch):
    from habitat_cd import runner
    from habitat_cd.errors import OracleViolation

    def boom(cfg, write=True):
        raise OracleViolation("forced")

    monkeypatch.setattr(runner, "run", boom)
    assert main(["run", "--out", str(tmp_path / "r")]) == 3


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
