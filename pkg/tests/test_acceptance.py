"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria 1, 2 and 10 run the detection grid (several minutes on one core).
"""
import json
import os
import time

import numpy as np
import pytest

from helpers import disks
from gaugescout.bench import ExperimentConfig, default_config, run_grid
from gaugescout.cli import main
from gaugescout.detect_shape import hough_circles
from gaugescout.detect_texture import normalize_weights, update_weights
from gaugescout.features import (DescriptorSet, KeypointSet, estimate_transform_ransac, match_ratio,
                                 match_ratio_bruteforce)
from gaugescout.imgcore import apply_h, invert_h
from gaugescout.ptzsim import PtzState, perturb_pose, render_view, view_homography
from conftest import cached_scene


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return emit


def _rates(table, shape, method):
    return {c.diameter: (c.successes, c.trials) for c in table.cells if c.shape == shape and c.method == method}


def _fmt(r):
    return " ".join(f"{d}:{s}/{t}" for d, (s, t) in r.items())


def _shape_grid(shape):
    cfg = ExperimentConfig.from_dict({**default_config().data, "shapes": [shape]})
    t0 = time.perf_counter()
    table = run_grid(cfg)
    return table, time.perf_counter() - t0


def test_criterion_1_circle_table(report):
    table, secs = _shape_grid("circle")
    bg, sh, tx = (_rates(table, "circle", m) for m in ("background", "shape", "texture"))
    full = lambda r, d: r[d][0] == r[d][1] == 3
    checks = {
        "background 3/3 at 80 and 40": full(bg, 80) and full(bg, 40),
        "shape 3/3 at 160/120/100": all(full(sh, d) for d in (160, 120, 100)),
        "shape <=1/3 at 60/40": all(sh[d][0] <= 1 for d in (60, 40)),
        "texture 3/3 at 160": full(tx, 160),
        "texture smallest >= background smallest":
            (table.smallest_full("circle", "texture") or np.inf) >= (table.smallest_full("circle", "background") or np.inf),
        "runtime < 300 s": secs < 300,
    }
    bad = [k for k, v in checks.items() if not v]
    ok = report(1, not bad, f"shape {_fmt(sh)}; texture {_fmt(tx)}; background {_fmt(bg)}; {secs:.0f} s"
                + (f"; failing: {bad}" if bad else ""))
    assert ok


def test_criterion_2_rect_table(report):
    table, secs = _shape_grid("rect")
    bg, sh, tx = (_rates(table, "rect", m) for m in ("background", "shape", "texture"))
    checks = {
        "shape 0/3 everywhere": all(s == 0 for s, _ in sh.values()),
        "background 3/3 at 80 and 40": all(bg[d][0] == bg[d][1] == 3 for d in (80, 40)),
        "texture 0/3 at <=100": all(s == 0 for d, (s, _) in tx.items() if d <= 100),
        "runtime < 300 s": secs < 300,
    }
    bad = [k for k, v in checks.items() if not v]
    ok = report(2, not bad, f"shape {_fmt(sh)}; texture {_fmt(tx)}; background {_fmt(bg)}; {secs:.0f} s"
                + (f"; failing: {bad}" if bad else ""))
    assert ok


def test_criterion_3_background_at_40px(report):
    cfg = ExperimentConfig.from_dict({"diameters": [40], "methods": ["background"]})
    table = run_grid(cfg, workers=1)
    cells = {c.shape: c for c in table.cells}
    ok = all(c.successes == c.trials == 3 for c in cells.values())
    report(3, ok, "; ".join(f"{s} {c.successes}/{c.trials} mean IoU {c.mean_iou:.3f}" for s, c in cells.items()))
    assert ok


def test_criterion_4_hough_oracle(report):
    t0 = time.perf_counter()
    worst_c = worst_r = 0.0
    for r in (15, 30, 60):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            cx, cy = rng.uniform(r + 5, 320 - r - 5), rng.uniform(r + 5, 240 - r - 5)
            top = hough_circles(disks(240, 320, [(cx, cy, r)]), 8, 80)[0]
            worst_c = max(worst_c, float(np.hypot(top.cx - cx, top.cy - cy)))
            worst_r = max(worst_r, abs(top.r - r))
    blank = [hough_circles(np.full((240, 320), v, np.uint8), 8, 80) for v in (0, 90, 255)]
    secs = time.perf_counter() - t0
    ok = worst_c <= 2 and worst_r <= 2 and not any(blank) and secs < 30
    report(4, ok, f"worst centre error {worst_c:.2f} px, worst radius error {worst_r:.2f} px, "
                  f"blank hypotheses {sum(map(len, blank))}, {secs:.1f} s")
    assert ok


def _dset(v):
    n = len(v)
    kp = KeypointSet(np.zeros((n, 2)), np.ones(n), np.zeros(n), np.zeros(n), np.zeros(n, np.int64), np.zeros(n))
    return DescriptorSet(kp, np.asarray(v, np.float32))


def test_criterion_5_matcher_oracle(report):
    rng = np.random.default_rng(5)
    same = 0
    for k in range(50):
        nq, nt = int(rng.integers(1, 201)), int(rng.integers(2, 201))
        q, t = (np.abs(rng.normal(size=(n, 128))).astype(np.float32) for n in (nq, nt))
        m = min(nq, nt) // 3
        q[:m] = t[:m] + rng.normal(0, 0.02, (m, 128)).astype(np.float32)
        a = match_ratio(_dset(q), _dset(t), block=int(rng.choice([16, 256])), workers=1 + k % 3)
        b = match_ratio_bruteforce(_dset(q), _dset(t))
        same += (a.query_idx.tobytes() == b.query_idx.tobytes() and a.train_idx.tobytes() == b.train_idx.tobytes()
                 and a.distance.tobytes() == b.distance.tobytes())
    ok = same == 50
    report(5, ok, f"{same}/50 pairs identical to the brute-force loop")
    assert ok


def test_criterion_6_ransac_recovery(report):
    worst = 0.0
    corners = np.array([[0, 0], [400, 0], [400, 400], [0, 400.0]])
    for seed in range(20):
        rng = np.random.default_rng(seed)
        s, a, t = rng.uniform(0.5, 2.0), rng.uniform(-np.pi, np.pi), rng.uniform(-50, 50, 2)
        H0 = np.array([[s * np.cos(a), -s * np.sin(a), t[0]], [s * np.sin(a), s * np.cos(a), t[1]], [0, 0, 1]])
        src = rng.uniform(0, 400, (50, 2))
        dst = apply_h(H0, src)
        bad = rng.choice(50, 20, replace=False)
        dst[bad] = rng.uniform(-200, 800, (20, 2))
        H, _ = estimate_transform_ransac(src, dst, model="similarity", rng=rng)
        worst = max(worst, float(np.abs(apply_h(H, corners) - apply_h(H0, corners)).max()))
    ok = worst < 0.5
    report(6, ok, f"worst corner error {worst:.2e} px over 20 seeds with 40% outliers")
    assert ok


def test_criterion_7_simulator_consistency(report):
    sc = cached_scene(0, "circle", 160)
    rng = np.random.default_rng(7)
    worst_d = worst_rt = 0.0
    for _ in range(20):
        pose = perturb_pose(sc.nominal_pose, rng)
        p = PtzState(float(rng.uniform(-0.15, 0.15)), float(rng.uniform(-0.1, 0.1)), float(rng.uniform(1, 8)))
        a = render_view(sc, pose, p).astype(float)
        b = render_view(sc, pose, PtzState(p.pan, p.tilt, 2 * p.zoom)).astype(float)
        down = 0.25 * (b[0::2, 0::2] + b[1::2, 0::2] + b[0::2, 1::2] + b[1::2, 1::2])
        worst_d = max(worst_d, float(np.abs(down - a[120:360, 160:480]).mean()))
        H = view_homography(sc, pose, p)
        c = sc.meters[0].bounds().corners()
        worst_rt = max(worst_rt, float(np.abs(apply_h(invert_h(H), apply_h(H, c)) - c).max()))
    ok = worst_d < 2 and worst_rt < 0.5
    report(7, ok, f"worst zoom-composition mean |d| {worst_d:.2f} levels, worst round trip {worst_rt:.1e} px")
    assert ok


def test_criterion_8_candidate_filter(report):
    rng = np.random.default_rng(8)
    fails = 0
    for k in range(1000):
        n = int(rng.integers(1, 64))
        w0 = normalize_weights(rng.uniform(1e-6, 1, n))
        s = rng.uniform(0, 1, n) * (rng.uniform(size=n) > 0.3)
        w, keep = update_weights(w0, s)
        fails += not (abs(w.sum() - 1) < 1e-9 and np.all(w >= 0) and keep[int(np.argmax(w0 * (s + 1e-3)))])
        s = rng.uniform(1e-3, 1, n)
        c = 10 ** rng.uniform(-3, 3)
        a, ka = update_weights(w0, s, eps=0.0)
        b, kb = update_weights(w0, c * s, eps=0.0)
        fails += not (np.array_equal(ka, kb) and np.allclose(a, b, rtol=1e-9, atol=1e-12))
    ok = fails == 0
    report(8, ok, f"{fails} violations over 1000 score vectors")
    assert ok


def test_criterion_9_determinism(report, tmp_path, capsys):
    cfg = {"diameters": [120, 60], "trials": 1, "skip": [["rect", 60, "texture"]]}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    outs = []
    for k, workers in enumerate(("1", "2")):
        assert main(["bench", "run", "--config", str(tmp_path / "c.json"), "--out-dir", str(tmp_path / f"o{k}"),
                     "--workers", workers, "--quiet"]) == 0
        outs.append((tmp_path / f"o{k}" / "results.csv").read_bytes())
    capsys.readouterr()
    ok = outs[0] == outs[1]
    report(9, ok, f"two runs, {len(outs[0])} bytes each, identical = {ok}")
    assert ok


def test_criterion_10_full_grid_time(report):
    t0 = time.perf_counter()
    table = run_grid(default_config())
    secs = time.perf_counter() - t0
    ok = secs < 600 and len(table.cells) == 36
    report(10, ok, f"{len(table.cells)} cells in {secs:.0f} s on {os.cpu_count()} core(s); {table.summary()}")
    assert ok
