"""Detection-rate experiments: shape x apparent diameter x method, seeded trials.

Trial ``t`` of a cell uses seed ``base_seed + t`` for the scene, for the
robot's pose error and for the sensor noise, so every method in a column
sees the same wall, the same meter and the same pose error. Sub-streams are
split off that seed for the texture method's candidate draws and for the
registration visit that produces the background annotation.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detect_background import BackgroundConfig, detect_background, make_annotation
from .detect_shape import ShapeConfig, detect_shape
from .detect_texture import MeterMapEntry, TextureConfig, detect_texture
from .imgcore import iou
from .ptzsim import CameraConfig, PtzState, SensorModel, SimulatedCamera, perturb_pose
from .scene import generate_scene
from .template import DetectionResult, make_template

CONFIG_SCHEMA = "gauge-scout-bench/1"
SHAPES = ("circle", "rect")
METHODS = ("shape", "texture", "background")
CSV_COLUMNS = ["shape", "diameter_px", "method", "successes", "trials", "mean_iou", "mean_ms"]


class ConfigError(ValueError):
    pass


class NothingToRun(ConfigError):
    pass


DEFAULT_CONFIG = {
    "schema": CONFIG_SCHEMA,
    "shapes": ["circle", "rect"],
    "diameters": [160, 120, 100, 80, 60, 40],
    "methods": ["shape", "texture", "background"],
    "trials": 3,
    "base_seed": 0,
    "skip": [],                     # [shape, diameter, method] triples reported as "-"
    "iou_threshold": 0.5,
    "scene": {"clutter_level": 0.5, "standoff": 5.0},
    "camera": {"view_w": 640, "view_h": 480, "hfov_deg": 60.0, "zoom_max": 30.0,
               "pan_limit_deg": 60.0, "tilt_limit_deg": 30.0},
    "pose_noise": {"sigma_xy": 0.15, "sigma_yaw_deg": 3.0},
    "sensor": {"psf_sigma": 1.0, "noise_sigma": 3.0},
    "template": {"nominal_diameter": 200.0},
    "shape": {"r_min": 12, "r_max": None, "vote_threshold": 0.4, "max_circles": 12,
              "fan_deg": 10.0, "fan_rays": 1, "min_matches": 8, "margin": 0.2, "ratio": 0.75},
    "texture": {"n_candidates": 16, "rounds": 3, "sigma_px": 40.0, "eps": 1e-3, "prune": 1e-4,
                "min_matches": 8, "ratio": 0.75, "max_fill": 0.8},
    "background": {"ratio": 0.75, "inlier_px": 3.0, "iterations": 1000, "min_inliers": 8,
                   "fill": 0.5, "refine_margin": 0.5, "refine_inlier_px": 3.0},
    "workers": 0,                   # 0 = one per logical core
    "out_dir": "bench_out",
    "timing_in_csv": False,         # wall-clock ms breaks byte-identical reruns, so it is opt-in
}


def _merge(base: dict, over: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{path + k!r} must be an object")
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


@dataclass
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, d: dict | None = None) -> "ExperimentConfig":
        d = dict(d or {})
        if d.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {d.get('schema')!r}")
        cfg = cls(_merge(DEFAULT_CONFIG, d))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2)

    def __getattr__(self, k):
        try:
            return self.__dict__["data"][k]
        except KeyError:
            raise AttributeError(k) from None

    def validate(self) -> None:
        d = self.data
        if not d["methods"]:
            raise NothingToRun("NothingToRun: no methods requested")
        if not d["shapes"] or not d["diameters"]:
            raise NothingToRun("NothingToRun: no shapes or diameters requested")
        bad = [m for m in d["methods"] if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}")
        bad = [s for s in d["shapes"] if s not in SHAPES]
        if bad:
            raise ConfigError(f"unknown shapes {bad}")
        if not isinstance(d["trials"], int) or d["trials"] < 1:
            raise ConfigError("trials must be an integer >= 1")
        ds = d["diameters"]
        if any(not isinstance(x, (int, float)) or x <= 0 for x in ds):
            raise ConfigError("diameters must be positive")
        if any(a <= b for a, b in zip(ds, ds[1:])):
            raise ConfigError("diameters must be strictly descending")
        for s in d["skip"]:
            if not (isinstance(s, list) and len(s) == 3):
                raise ConfigError("skip entries are [shape, diameter, method]")
        if not 0 < d["iou_threshold"] <= 1:
            raise ConfigError("iou_threshold must be in (0, 1]")
        if not isinstance(d["workers"], int) or d["workers"] < 0:
            raise ConfigError("workers must be a non-negative integer")
        try:
            self.camera_config(), self.sensor_model(), self.shape_config(), self.texture_config(0)
            self.background_config(0)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    # typed views of the blocks
    def camera_config(self) -> CameraConfig:
        return CameraConfig(**self.data["camera"])

    def sensor_model(self) -> SensorModel:
        return SensorModel(**self.data["sensor"])

    def shape_config(self) -> ShapeConfig:
        return ShapeConfig(**self.data["shape"])

    def texture_config(self, seed) -> TextureConfig:
        pn = self.data["pose_noise"]
        return TextureConfig(sigma_xy=pn["sigma_xy"], sigma_yaw=math.radians(pn["sigma_yaw_deg"]),
                             seed=seed, **self.data["texture"])

    def background_config(self, seed) -> BackgroundConfig:
        return BackgroundConfig(seed=seed, **self.data["background"])

    def skipped(self, shape, diameter, method) -> bool:
        return any(s[0] == shape and float(s[1]) == float(diameter) and s[2] == method for s in self.data["skip"])

    def cells(self) -> list:
        return [(s, d, m) for s in self.shapes for d in self.diameters for m in self.methods]


def default_config() -> ExperimentConfig:
    return ExperimentConfig.from_dict({})


@dataclass
class Episode:
    found: bool
    iou: float
    ms: float
    reason: str | None
    result: DetectionResult | None = None
    truth: object = None
    frames: list | None = None


def make_trial(cfg: ExperimentConfig, shape: str, diameter: float, trial: int):
    """Scene, true pose, template and annotation for one trial seed."""
    seed = cfg.base_seed + trial
    cam = cfg.camera_config()
    sc = cfg.data["scene"]
    scene, _ = generate_scene(seed, shape, diameter, sc["clutter_level"], cam, sc["standoff"])
    pn = cfg.data["pose_noise"]
    pose = perturb_pose(scene.nominal_pose, seed, pn["sigma_xy"], math.radians(pn["sigma_yaw_deg"]))
    return seed, scene, pose


def run_episode(cfg: ExperimentConfig, shape: str, diameter: float, method: str, trial: int,
                prepared=None, annotation=None, keep=False) -> Episode:
    """One detection episode. Any exception inside the method is a recorded non-success."""
    seed, scene, pose = prepared or make_trial(cfg, shape, diameter, trial)
    camera = SimulatedCamera(scene, pose, scene.camera, PtzState(), cfg.sensor_model(), seed=seed)
    t0 = time.perf_counter()
    try:
        tmpl = make_template(scene.meter("m0"), cfg.data["template"]["nominal_diameter"])
        if method == "shape":
            res = detect_shape(camera.capture(), tmpl, cfg.shape_config())
            res.ptz = camera.ptz
        elif method == "texture":
            res = detect_texture(camera, scene.nominal_pose, tmpl, MeterMapEntry.from_scene(scene),
                                 cfg.texture_config([seed, 1]))
        elif method == "background":
            ann = annotation or make_annotation(scene, "m0", sensor=cfg.sensor_model(), seed=[seed, 2])
            res = detect_background(camera, scene.nominal_pose, ann, tmpl, cfg.background_config(seed))
        else:
            raise ValueError(f"unknown method {method!r}")
    except Exception as e:      # a crashing method is a failed trial, not a failed grid
        ms = 1000 * (time.perf_counter() - t0)
        return Episode(False, 0.0, ms, f"{type(e).__name__}: {e}", frames=camera.frames if keep else None)
    ms = res.elapsed_ms
    truth = None
    v = 0.0
    if res.found:
        camera.move(res.ptz)
        truth = camera.truth("m0")
        v = iou(res.region, truth)
    ok = res.found and v >= cfg.iou_threshold
    reason = res.reason if not res.found else (None if ok else "LowIoU")
    return Episode(ok, v, ms, reason, res if keep else None, truth, camera.frames if keep else None)


@dataclass
class CellResult:
    shape: str
    diameter: float
    method: str
    successes: int | None
    trials: int | None
    mean_iou: float | None
    mean_ms: float | None
    reasons: list

    @property
    def skipped(self) -> bool:
        return self.trials is None

    @property
    def full(self) -> bool:
        return not self.skipped and self.successes == self.trials


def _cell(shape, diameter, method, eps) -> CellResult:
    return CellResult(shape, diameter, method, sum(e.found for e in eps), len(eps),
                      float(np.mean([e.iou for e in eps])), float(np.mean([e.ms for e in eps])),
                      [e.reason for e in eps])


def run_cell(cfg: ExperimentConfig, shape: str, diameter: float, method: str):
    """``(successes, trials, mean_iou)`` for one table cell."""
    c = run_column(cfg, shape, diameter, [method])[0]
    return c.successes, c.trials, c.mean_iou


def run_column(cfg: ExperimentConfig, shape: str, diameter: float, methods=None) -> list:
    """All methods of one (shape, diameter) column, sharing each trial's scene."""
    methods = list(cfg.methods if methods is None else methods)
    eps = {m: [] for m in methods}
    todo = [m for m in methods if not cfg.skipped(shape, diameter, m)]
    if todo:
        for t in range(cfg.trials):
            prepared = make_trial(cfg, shape, diameter, t)
            for m in todo:
                eps[m].append(run_episode(cfg, shape, diameter, m, t, prepared))
    return [_cell(shape, diameter, m, eps[m]) if m in todo else CellResult(shape, diameter, m, None, None, None, None, [])
            for m in methods]


def _column_job(args):
    data, shape, diameter = args
    return run_column(ExperimentConfig(data), shape, diameter)


@dataclass
class ResultTable:
    cfg: ExperimentConfig
    cells: list
    elapsed_s: float = 0.0

    def get(self, shape, diameter, method) -> CellResult:
        for c in self.cells:
            if c.shape == shape and c.diameter == diameter and c.method == method:
                return c
        raise KeyError((shape, diameter, method))

    def smallest_full(self, shape, method):
        ds = [c.diameter for c in self.cells if c.shape == shape and c.method == method and c.full]
        return min(ds) if ds else None

    def to_csv(self, timing: bool | None = None) -> str:
        timing = self.cfg.timing_in_csv if timing is None else timing
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in self.cells:
            if c.skipped:
                w.writerow([c.shape, _fmt_d(c.diameter), c.method, "-", "-", "-", "-"])
            else:
                w.writerow([c.shape, _fmt_d(c.diameter), c.method, c.successes, c.trials,
                            f"{c.mean_iou:.3f}", f"{c.mean_ms:.1f}" if timing else ""])
        return buf.getvalue()

    def to_markdown(self) -> str:
        out = []
        ds = list(self.cfg.diameters)
        for s in self.cfg.shapes:
            out.append(f"### {s}\n")
            head = ["method"] + [f"{_fmt_d(d)} px" for d in ds]
            rows = [[m] + [_rate(self.get(s, d, m)) for d in ds] for m in self.cfg.methods]
            out.append(_md_table(head, rows))
            out.append("")
        out.append("### cells\n")
        rows = []
        for c in self.cells:
            if c.skipped:
                rows.append([c.shape, _fmt_d(c.diameter), c.method, "-", "-", "-", "-"])
            else:
                rows.append([c.shape, _fmt_d(c.diameter), c.method, str(c.successes), str(c.trials),
                             f"{c.mean_iou:.3f}", f"{c.mean_ms:.1f}"])
        out.append(_md_table(CSV_COLUMNS, rows))
        out.append("")
        out.append(self.summary())
        return "\n".join(out) + "\n"

    def summary(self) -> str:
        parts = []
        for s in self.cfg.shapes:
            best = {m: self.smallest_full(s, m) for m in self.cfg.methods}
            got = {m: d for m, d in best.items() if d is not None}
            if not got:
                parts.append(f"{s}: no method fully detected any diameter")
                continue
            dmin = min(got.values())
            who = "/".join(m for m, d in got.items() if d == dmin)
            parts.append(f"{s}: {who} ({_fmt_d(dmin)} px)")
        return f"smallest fully-detected diameter: {'; '.join(parts)}; grid time {self.elapsed_s:.1f} s"


def _fmt_d(d) -> str:
    return str(int(d)) if float(d).is_integer() else f"{d:g}"


def _rate(c: CellResult) -> str:
    return "-" if c.skipped else f"{c.successes}/{c.trials}"


def _md_table(head, rows) -> str:
    cols = list(zip(head, *rows))
    wid = [max(len(str(x)) for x in col) for col in cols]
    line = lambda r: "| " + " | ".join(str(x).ljust(w) for x, w in zip(r, wid)) + " |"
    return "\n".join([line(head), "|" + "|".join("-" * (w + 2) for w in wid) + "|"] + [line(r) for r in rows])


def run_grid(cfg: ExperimentConfig, workers: int | None = None, progress=None) -> ResultTable:
    """Every requested cell. Columns run in a process pool; order of the output never depends on it."""
    t0 = time.perf_counter()
    jobs = [(cfg.data, s, d) for s in cfg.shapes for d in cfg.diameters]
    n = workers if workers is not None else (cfg.workers or os.cpu_count() or 1)
    n = max(1, min(n, len(jobs)))
    if n == 1:
        cols = []
        for j in jobs:
            cols.append(_column_job(j))
            if progress:
                progress(cols[-1])
    else:
        with ProcessPoolExecutor(n) as ex:
            cols = []
            for col in ex.map(_column_job, jobs):
                cols.append(col)
                if progress:
                    progress(col)
    cells = [c for col in cols for c in col]
    return ResultTable(cfg, cells, time.perf_counter() - t0)


def write_outputs(table: ResultTable, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p_csv, p_md = out / "results.csv", out / "results.md"
    p_csv.write_text(table.to_csv())
    p_md.write_text(table.to_markdown())
    return p_csv, p_md
