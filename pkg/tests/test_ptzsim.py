import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import cached_scene
from gaugescout.imgcore import Region, apply_h, crop_resize, invert_h
from gaugescout.ptzsim import (IDEAL_SENSOR, CameraConfig, PtzState, RobotPose, SensorModel, SimulatedCamera,
                               head_transform, meter_region, perturb_pose, point_zoom_command, render_view,
                               view_homography)
from gaugescout.scene import SceneSpec, generate_scene

CAM = CameraConfig()


def _down2(a):
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def _random_view(rng, scene):
    pose = perturb_pose(scene.nominal_pose, rng)
    return pose, PtzState(float(rng.uniform(-0.15, 0.15)), float(rng.uniform(-0.1, 0.1)), float(rng.uniform(1, 8)))


def test_ptz_clamp_and_pose_validation():
    p = PtzState(2.0, -1.0, 50.0).clamped(CAM)
    assert p.pan == pytest.approx(math.radians(60)) and p.tilt == pytest.approx(math.radians(-30))
    assert p.zoom == 30.0
    assert PtzState(0, 0, 0.2).clamped(CAM).zoom == 1.0
    with pytest.raises(ValueError):
        RobotPose(0, 0, 0, standoff=0)


def test_f0_gives_60_degree_fov():
    assert 2 * math.degrees(math.atan(CAM.view_w / 2 / CAM.f0)) == pytest.approx(60.0)


def test_scene_deterministic():
    a, _ = generate_scene(11, "circle", 60)
    b, _ = generate_scene(11, "circle", 60)
    np.testing.assert_array_equal(a.wall, b.wall)
    assert a.meters == b.meters and a.nominal_pose == b.nominal_pose
    c, _ = generate_scene(12, "circle", 60)
    assert not np.array_equal(a.wall, c.wall)


@pytest.mark.parametrize("shape,d,tol", [("circle", 160, 2), ("rect", 40, 1), ("circle", 40, 1), ("rect", 120, 1)])
def test_scene_hits_apparent_size(shape, d, tol):
    sc = cached_scene(0, shape, d)
    r = meter_region(sc, "m0", sc.nominal_pose, PtzState())
    assert abs(max(r.w, r.h) - d) <= tol
    if shape == "rect":
        assert r.h == pytest.approx(0.72 * r.w)
    b = sc.meters[0].bounds()
    assert b.x >= 0 and b.y >= 0 and b.x + b.w <= sc.wall.shape[1] and b.y + b.h <= sc.wall.shape[0]
    assert sc.wall.shape[1] >= 4000 and sc.meters[0].diameter > 8
    assert 0 <= r.x and r.x + r.w <= CAM.view_w and 0 <= r.y and r.y + r.h <= CAM.view_h


def test_scene_rejects_bad_diameter():
    with pytest.raises(ValueError):
        generate_scene(0, "circle", 4)
    with pytest.raises(ValueError):
        generate_scene(0, "hexagon", 100)


def test_scene_json_round_trip(tmp_path, scene_c160):
    scene_c160.save(tmp_path / "s.json")
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["schema"] == "gauge-scout-scene/1"
    gt = Region.from_dict(doc["ground_truth_wide"]["m0"])
    assert abs(gt.w - 160) <= 2
    back = SceneSpec.load(tmp_path / "s.json")
    np.testing.assert_array_equal(back.wall, scene_c160.wall)
    assert back.meters == scene_c160.meters and back.nominal_pose == scene_c160.nominal_pose


def test_nominal_view_equals_scaled_crop(scene_c160):
    sc = scene_c160
    v = render_view(sc, sc.nominal_pose, PtzState()).astype(float)
    s = CAM.f0 / sc.nominal_pose.standoff / sc.px_per_meter
    cx, cy = sc.nominal_pose.x * sc.px_per_meter, sc.nominal_pose.y * sc.px_per_meter
    x0, y0 = cx - (CAM.view_w - 1) / 2 / s, cy - (CAM.view_h - 1) / 2 / s
    ref = crop_resize(sc.wall, Region(x0, y0, CAM.view_w / s, CAM.view_h / s), s).astype(float)
    assert np.abs(ref[:CAM.view_h, :CAM.view_w] - v).mean() < 2


def test_zoom_composition(scene_c160):
    rng = np.random.default_rng(0)
    for _ in range(5):
        pose, p = _random_view(rng, scene_c160)
        a = render_view(scene_c160, pose, p).astype(float)
        b = render_view(scene_c160, pose, PtzState(p.pan, p.tilt, 2 * p.zoom)).astype(float)
        assert np.abs(_down2(b) - a[120:360, 160:480]).mean() < 2


def test_pan_off_wall_is_black(scene_c160):
    v = render_view(scene_c160, scene_c160.nominal_pose, PtzState(math.radians(60), 0, 4))
    assert v.max() == 0


def test_nominal_homography_is_affine(scene_c160):
    H = view_homography(scene_c160, scene_c160.nominal_pose, PtzState())
    assert abs(H[2, 0]) < 1e-9 and abs(H[2, 1]) < 1e-9
    assert abs(H[0, 1]) < 1e-9 and abs(H[1, 0]) < 1e-9
    H2 = view_homography(scene_c160, scene_c160.nominal_pose, PtzState(0, 0, 2))
    assert H2[0, 0] == pytest.approx(2 * H[0, 0]) and H2[1, 1] == pytest.approx(2 * H[1, 1])


@settings(max_examples=20)
@given(st.integers(0, 2**31 - 1))
def test_gt_round_trip(seed):
    sc = cached_scene(0, "circle", 160)
    pose, p = _random_view(np.random.default_rng(seed), sc)
    H = view_homography(sc, pose, p)
    corners = sc.meters[0].bounds().corners()
    back = apply_h(invert_h(H), apply_h(H, corners))
    assert np.abs(back - corners).max() < 0.5


def test_perturb_pose():
    nom = RobotPose(3, 2, 0.1, 5)
    assert perturb_pose(nom, 4, 0, 0) == nom
    assert perturb_pose(nom, 4) == perturb_pose(nom, 4)
    assert perturb_pose(nom, 4).standoff == 5
    xs = np.array([perturb_pose(nom, rng, 0.1, 0.0).x for rng in [np.random.default_rng(7)] * 1000])
    assert 0.09 <= xs.std() <= 0.11
    with pytest.raises(ValueError):
        perturb_pose(nom, 0, -1, 0)


def test_point_zoom_fixed_points():
    p = PtzState(0.1, -0.05, 3.0)
    c = CAM.center
    q = point_zoom_command(c, p, 1.0)
    assert q.pan == pytest.approx(p.pan) and q.tilt == pytest.approx(p.tilt) and q.zoom == pytest.approx(3.0)
    q = point_zoom_command(c, p, 2.0)
    assert q.pan == pytest.approx(p.pan) and q.tilt == pytest.approx(p.tilt) and q.zoom == pytest.approx(6.0)
    assert point_zoom_command(c, p, 100.0).zoom == 30.0
    with pytest.raises(ValueError):
        point_zoom_command(c, p, 0)


def _ssd_peak(img, patch, around, radius):
    k = patch.shape[0] // 2
    best, arg = np.inf, None
    for y in range(int(round(around[1])) - radius, int(round(around[1])) + radius + 1):
        for x in range(int(round(around[0])) - radius, int(round(around[0])) + radius + 1):
            w = img[y - k:y + k + 1, x - k:x + k + 1]
            d = np.sum((w - patch) ** 2)
            if d < best:
                best, arg = d, (x, y)
    return arg


def test_point_zoom_centres_target(scene_c160):
    sc = scene_c160
    p0 = PtzState(0.02, 0.01, 1.5)
    v0 = render_view(sc, sc.nominal_pose, p0).astype(float)
    for tx, ty in [(420, 150), (200, 330), (500, 300)]:
        p1 = point_zoom_command((tx, ty), p0, 1.0)
        v1 = render_view(sc, sc.nominal_pose, p1).astype(float)
        # the wall point under the old target now projects to the view centre
        wall_pt = apply_h(invert_h(view_homography(sc, sc.nominal_pose, p0)), [(tx, ty)])
        assert np.abs(apply_h(view_homography(sc, sc.nominal_pose, p1), wall_pt)[0] - CAM.center).max() < 1e-6
        patch = v0[ty - 7:ty + 8, tx - 7:tx + 8]
        x, y = _ssd_peak(v1, patch, CAM.center, 6)
        assert math.hypot(x - CAM.center[0], y - CAM.center[1]) <= 2


def _corner_like(patch):
    # edges and stripes have an ambiguous SSD peak along their direction
    gy, gx = np.gradient(patch)
    t = np.array([[np.sum(gx * gx), np.sum(gx * gy)], [np.sum(gx * gy), np.sum(gy * gy)]])
    lo, hi = np.linalg.eigvalsh(t)
    return lo > 0.25 * hi


def test_rendering_consistency_between_views(scene_c160):
    sc = scene_c160
    rng = np.random.default_rng(3)
    pa, pb = sc.nominal_pose, perturb_pose(sc.nominal_pose, 5)
    ptz = PtzState(0.0, 0.0, 2.0)
    va = render_view(sc, pa, ptz).astype(float)
    vb = render_view(sc, pb, ptz).astype(float)
    Hab = view_homography(sc, pb, ptz) @ invert_h(view_homography(sc, pa, ptz))
    hits = 0
    for _ in range(300):
        x, y = rng.integers(60, 580), rng.integers(60, 420)
        patch = va[y - 5:y + 6, x - 5:x + 6]
        if patch.std() < 12 or not _corner_like(patch):
            continue
        q = apply_h(Hab, [(x, y)])[0]
        if not (20 < q[0] < 620 and 20 < q[1] < 460):
            continue
        px, py = _ssd_peak(vb, patch, q, 4)
        assert math.hypot(px - q[0], py - q[1]) <= 1.0
        hits += 1
    assert hits >= 10


def test_gt_side_scales_with_zoom(scene_c160):
    sc = scene_c160
    m = meter_region(sc, "m0", sc.nominal_pose, PtzState())
    aim = point_zoom_command(m.center, PtzState(), 1.0)
    base = meter_region(sc, "m0", sc.nominal_pose, aim)
    for z in (1.5, 2.0, 2.5):
        r = meter_region(sc, "m0", sc.nominal_pose, PtzState(aim.pan, aim.tilt, z))
        assert abs(r.w - z * base.w) <= 2 and abs(r.h - z * base.h) <= 2


def test_head_transform_matches_render_geometry(scene_c160):
    sc = scene_c160
    pose = perturb_pose(sc.nominal_pose, 1)
    a, b = PtzState(0.05, -0.02, 1.0), PtzState(-0.03, 0.04, 3.0)
    H = view_homography(sc, pose, b) @ invert_h(view_homography(sc, pose, a))
    G = head_transform(a, b)
    pts = np.array([[10, 10], [600, 50], [320, 240], [100, 400.0]])
    np.testing.assert_allclose(apply_h(G, pts), apply_h(H, pts), atol=1e-6)


def test_sensor_and_camera_frames(scene_c160):
    sc = scene_c160
    ideal = SimulatedCamera(sc, sc.nominal_pose, sensor=IDEAL_SENSOR)
    np.testing.assert_array_equal(ideal.capture(), render_view(sc, sc.nominal_pose, PtzState()))
    a = SimulatedCamera(sc, sc.nominal_pose, seed=3)
    b = SimulatedCamera(sc, sc.nominal_pose, seed=3)
    f1, f2 = a.capture(), a.capture()
    np.testing.assert_array_equal(f1, b.capture())
    assert not np.array_equal(f1, f2)          # fresh noise per frame
    assert len(a.frames) == 2
    a.move(PtzState(5.0, 0, 99))
    assert a.ptz == PtzState(5.0, 0, 99).clamped(CAM)
    noisy = SensorModel(0, 3.0).apply(np.full((200, 200), 100, np.uint8), np.random.default_rng(0))
    assert abs(noisy.astype(float).std() - 3.0) < 0.2
