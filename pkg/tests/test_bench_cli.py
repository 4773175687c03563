import csv
import io
import json
import subprocess
import sys

import pytest

from gaugescout.bench import (CSV_COLUMNS, ConfigError, ExperimentConfig, NothingToRun, ResultTable, CellResult,
                              default_config, run_cell, run_episode, run_grid, write_outputs)
from gaugescout.cli import main

SMALL = {"shapes": ["circle"], "diameters": [100], "methods": ["background"], "trials": 1}


def _cfg(**kw):
    return ExperimentConfig.from_dict({**SMALL, **kw})


@pytest.mark.parametrize("bad, err", [
    ({"trials": 0}, ConfigError),
    ({"trials": 1.5}, ConfigError),
    ({"methods": []}, NothingToRun),
    ({"methods": ["magic"]}, ConfigError),
    ({"shapes": ["hexagon"]}, ConfigError),
    ({"diameters": [40, 80]}, ConfigError),
    ({"diameters": [80, 80]}, ConfigError),
    ({"diameters": [80, -1]}, ConfigError),
    ({"colour": "red"}, ConfigError),
    ({"camera": {"fov": 3}}, ConfigError),
    ({"schema": "gauge-scout-bench/0"}, ConfigError),
    ({"skip": [["circle", 40]]}, ConfigError),
    ({"iou_threshold": 0}, ConfigError),
])
def test_config_validation(bad, err):
    with pytest.raises(err):
        ExperimentConfig.from_dict(bad)


def test_default_config_shape():
    cfg = default_config()
    assert cfg.trials == 3 and cfg.diameters == [160, 120, 100, 80, 60, 40]
    assert len(cfg.cells()) == 2 * 6 * 3
    assert ExperimentConfig.from_dict(json.loads(cfg.to_json())).data == cfg.data


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[]")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "list.json")


def test_method_failure_is_recorded(monkeypatch):
    import gaugescout.bench as bench

    def boom(*a, **k):
        raise RuntimeError("sensor unplugged")

    monkeypatch.setattr(bench, "detect_shape", boom)
    ep = run_episode(_cfg(methods=["shape"]), "circle", 100, "shape", 0)
    assert not ep.found and ep.reason == "RuntimeError: sensor unplugged"


def test_run_cell_is_deterministic():
    cfg = _cfg()
    a = run_cell(cfg, "circle", 100, "background")
    assert a == run_cell(cfg, "circle", 100, "background")
    assert a[0] == a[1] == 1 and a[2] >= 0.5


def _fake_table(cfg):
    cells = []
    for s, d, m in cfg.cells():
        if cfg.skipped(s, d, m):
            cells.append(CellResult(s, d, m, None, None, None, None, []))
        else:
            cells.append(CellResult(s, d, m, int(d) % 4, 3, d / 200, 12.5, [None] * 3))
    return ResultTable(cfg, cells, 1.0)


def test_csv_and_markdown_agree():
    cfg = ExperimentConfig.from_dict({"skip": [["rect", 160, "shape"]]})
    t = _fake_table(cfg)
    rows = list(csv.DictReader(io.StringIO(t.to_csv())))
    assert list(rows[0]) == CSV_COLUMNS and len(rows) == 36
    md = t.to_markdown()
    md_rows = [ln for ln in md.splitlines() if ln.startswith("| ") and ln.split("|")[1].strip() in ("circle", "rect")]
    assert len(md_rows) == 36
    for r, ln in zip(rows, md_rows):
        cols = [c.strip() for c in ln.strip("|").split("|")]
        assert cols[:6] == [r[k] for k in CSV_COLUMNS[:6]]
    skipped = next(r for r in rows if r["shape"] == "rect" and r["diameter_px"] == "160" and r["method"] == "shape")
    assert set(skipped.values()) - {"rect", "160", "shape"} == {"-"}
    rect_shape = next(ln for ln in md.split("### rect")[1].splitlines() if ln.startswith("| shape"))
    assert rect_shape.split("|")[2].strip() == "-"
    assert md.strip().splitlines()[-1].startswith("smallest fully-detected diameter:")


def test_timing_column_is_opt_in():
    cfg = ExperimentConfig.from_dict({})
    t = _fake_table(cfg)
    assert all(r["mean_ms"] == "" for r in csv.DictReader(io.StringIO(t.to_csv())))
    assert all(r["mean_ms"] == "12.5" for r in csv.DictReader(io.StringIO(t.to_csv(timing=True))))


def test_summary_names_smallest_full_diameter():
    cfg = ExperimentConfig.from_dict({"shapes": ["circle"], "diameters": [80, 40], "methods": ["shape", "background"]})
    cells = [CellResult("circle", 80, "shape", 3, 3, 0.9, 1, []), CellResult("circle", 80, "background", 3, 3, 0.9, 1, []),
             CellResult("circle", 40, "shape", 1, 3, 0.3, 1, []), CellResult("circle", 40, "background", 3, 3, 0.8, 1, [])]
    assert "circle: background (40 px)" in ResultTable(cfg, cells).summary()


def test_skipped_cell_runs_nothing():
    cfg = _cfg(skip=[["circle", 100, "background"]])
    t = run_grid(cfg, workers=1)
    assert t.cells[0].skipped and "-" in t.to_csv().splitlines()[1]


def test_grid_order_and_outputs(tmp_path):
    cfg = _cfg(diameters=[120, 100], methods=["shape", "background"])
    t = run_grid(cfg, workers=1)
    assert [(c.diameter, c.method) for c in t.cells] == [(120, "shape"), (120, "background"), (100, "shape"),
                                                          (100, "background")]
    p_csv, p_md = write_outputs(t, tmp_path)
    assert p_csv.read_text() == t.to_csv() and p_md.exists()


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["bench", "run", "--config", str(tmp_path / "missing.json")]) == 2
    assert main(["bench", "run", "--config", "x.json", "--frobnicate"]) == 2
    assert main(["nonsense"]) == 2
    (tmp_path / "c.json").write_text(json.dumps({"trials": 0}))
    assert main(["bench", "run", "--config", str(tmp_path / "c.json")]) == 2
    assert main(["detect", "--method", "shape"]) == 2
    capsys.readouterr()
    assert main(["bench", "defaults"]) == 0
    assert json.loads(capsys.readouterr().out) == default_config().data


def test_cli_bench_run(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps(SMALL))
    assert main(["bench", "run", "--config", str(tmp_path / "c.json"), "--out-dir", str(tmp_path / "o"),
                 "--workers", "1", "--quiet"]) == 0
    assert (tmp_path / "o" / "results.csv").read_text().splitlines()[1].startswith("circle,100,background,1,1,")
    assert "smallest fully-detected diameter" in capsys.readouterr().out


def test_cli_detect_dumps_views(tmp_path, capsys):
    assert main(["detect", "--method", "background", "--shape", "circle", "--diameter", "80", "--seed", "0",
                 "--out-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "found = true" in out and "final IoU = " in out
    names = sorted(p.name for p in tmp_path.iterdir())
    assert len(names) == 2 and names[0] == "frame00_z1.00.png" and names[1].startswith("frame01_z")


def test_cli_scene_annotate_detect(tmp_path, capsys):
    assert main(["scene", "gen", "--shape", "rect", "--diameter", "100", "--seed", "3", "--out", str(tmp_path)]) == 0
    assert {"scene.json", "wall.png", "wide.png"} <= {p.name for p in tmp_path.iterdir()}
    assert main(["annotate", "make", "--scene", str(tmp_path / "scene.json"), "--seed", "3",
                 "--out", str(tmp_path / "ann")]) == 0
    assert main(["detect", "--method", "background", "--scene", str(tmp_path / "scene.json"), "--seed", "3",
                 "--annotation-dir", str(tmp_path / "ann")]) == 0
    assert "found = true" in capsys.readouterr().out


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "gaugescout", "bench", "cell", "--shape", "circle"],
                       capture_output=True, text=True)
    assert p.returncode == 2 and "usage" in p.stderr
