"""Two-stage detection through an annotated surround image.

The surround image (a wide shot taken when the waypoint was registered,
with the meter's box marked) is registered to the live wide view through
background features; the meter box is carried across, the head zooms onto
it, and template matching then tightens the box.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import DescriptorSet, NoRobustTransform, estimate_transform_ransac, extract, match_ratio
from .imgcore import Region, as_gray, map_region, read_png, write_png
from .ptzsim import CameraConfig, PtzState, RobotPose, SensorModel, SimulatedCamera, head_transform, point_zoom_command
from .template import DetectionResult, MeterTemplate

ANNOTATION_SCHEMA = "gauge-scout-annotation/1"


@dataclass
class BackgroundAnnotation:
    surround: np.ndarray
    regions: dict                        # meter id -> Region in surround pixels
    features: DescriptorSet | None = field(default=None, repr=False)

    def __post_init__(self):
        self.surround = as_gray(self.surround)
        h, w = self.surround.shape
        for mid, r in self.regions.items():
            if r.x < 0 or r.y < 0 or r.x + r.w > w or r.y + r.h > h:
                raise ValueError(f"annotated region for {mid!r} leaves the surround image")
        if self.features is None:
            self.features = extract(self.surround)

    def region(self, meter_id=None) -> Region:
        if meter_id is None:
            return next(iter(self.regions.values()))
        return self.regions[meter_id]

    def save(self, json_path) -> None:
        json_path = Path(json_path)
        png = json_path.with_suffix(".png")
        write_png(png, self.surround)
        doc = {"schema": ANNOTATION_SCHEMA, "surround_png": png.name,
               "meters": [{"id": k, **r.to_dict()} for k, r in self.regions.items()]}
        json_path.write_text(json.dumps(doc, indent=2))

    @classmethod
    def load(cls, json_path) -> "BackgroundAnnotation":
        json_path = Path(json_path)
        d = json.loads(json_path.read_text())
        if d.get("schema") != ANNOTATION_SCHEMA:
            raise ValueError(f"unsupported annotation schema {d.get('schema')!r}")
        img = read_png(json_path.parent / d["surround_png"])
        return cls(img, {m["id"]: Region.from_dict(m) for m in d["meters"]})


def make_annotation(scene, meter_id="m0", pose: RobotPose | None = None, ptz: PtzState = PtzState(),
                    sensor: SensorModel = SensorModel(), seed=0) -> BackgroundAnnotation:
    """Simulated registration visit: a wide shot from ``pose`` (default nominal) with the true box marked."""
    pose = scene.nominal_pose if pose is None else pose
    cam = SimulatedCamera(scene, pose, scene.camera, ptz, sensor, seed=seed)
    img = cam.capture()
    r = cam.truth(meter_id)
    h, w = img.shape
    x0, y0 = max(r.x, 0.0), max(r.y, 0.0)
    x1, y1 = min(r.x + r.w, w - 1.0), min(r.y + r.h, h - 1.0)
    return BackgroundAnnotation(img, {meter_id: Region(x0, y0, x1 - x0, y1 - y0)})


@dataclass(frozen=True)
class BackgroundConfig:
    ratio: float = 0.75
    inlier_px: float = 3.0
    iterations: int = 1000
    min_inliers: int = 8
    fill: float = 0.5
    refine_margin: float = 0.5
    refine_inlier_px: float = 3.0
    seed: int = 0


def coarse_localize(view, ann: BackgroundAnnotation, cfg: BackgroundConfig = BackgroundConfig(),
                    meter_id=None, view_feats: DescriptorSet | None = None):
    """Register surround -> view and carry the annotated box across; returns ``(Region, H)``.

    Raises :class:`NoRobustTransform` when the background does not register.
    """
    if len(ann.features) == 0:
        raise ValueError("annotation has no features")
    vf = view_feats if view_feats is not None else extract(view)
    m = match_ratio(ann.features, vf, cfg.ratio)
    H, mask = estimate_transform_ransac(m, model="homography", inlier_px=cfg.inlier_px,
                                        iterations=cfg.iterations, min_inliers=cfg.min_inliers,
                                        rng=np.random.default_rng(cfg.seed))
    return map_region(H, ann.region(meter_id)), H


def refine(view_zoomed, tmpl: MeterTemplate, coarse_region: Region, cfg: BackgroundConfig = BackgroundConfig()):
    """Template match near the coarse box; returns ``(Region, flag, inliers)``.

    ``flag`` is ``"CoarseOnly"`` when no similarity transform reaches the inlier minimum.
    """
    view = as_gray(view_zoomed)
    h, w = view.shape
    box = coarse_region.expand(cfg.refine_margin)
    x0, y0 = max(int(np.floor(box.x)), 0), max(int(np.floor(box.y)), 0)
    x1, y1 = min(int(np.ceil(box.x + box.w)), w), min(int(np.ceil(box.y + box.h)), h)
    if x1 - x0 < 16 or y1 - y0 < 16:
        return coarse_region, "CoarseOnly", 0
    feats = extract(view[y0:y1, x0:x1])
    m = match_ratio(tmpl.features, feats, cfg.ratio)
    try:
        H, mask = estimate_transform_ransac(m, model="similarity", inlier_px=cfg.refine_inlier_px,
                                            iterations=cfg.iterations, min_inliers=cfg.min_inliers,
                                            rng=np.random.default_rng(cfg.seed))
    except NoRobustTransform:
        return coarse_region, "CoarseOnly", 0
    r = map_region(H, tmpl.meter_box)
    return Region(r.x + x0, r.y + y0, r.w, r.h), None, int(mask.sum())


def detect_background(camera, nominal: RobotPose, ann: BackgroundAnnotation, tmpl: MeterTemplate,
                      cfg: BackgroundConfig = BackgroundConfig(), meter_id=None) -> DetectionResult:
    t0 = time.perf_counter()
    cam: CameraConfig = camera.config
    ptz0 = camera.ptz
    wide = camera.capture()
    trace = []
    try:
        coarse, H = coarse_localize(wide, ann, cfg, meter_id)
    except NoRobustTransform as e:
        trace.append({"stage": "coarse", "error": str(e)})
        return DetectionResult(False, "background", reason="NoRobustTransform", ptz=ptz0, trace=trace,
                               elapsed_ms=1000 * (time.perf_counter() - t0))
    trace.append({"stage": "coarse", "ptz": ptz0, "region": coarse})
    factor = cfg.fill * min(cam.view_w, cam.view_h) / max(coarse.w, coarse.h)
    camera.move(point_zoom_command(coarse.center, ptz0, factor, cam))
    ptz1 = camera.ptz
    zoomed = camera.capture()
    carried = map_region(head_transform(ptz0, ptz1, cam), coarse)
    region, flag, inliers = refine(zoomed, tmpl, carried, cfg)
    trace.append({"stage": "refine", "ptz": ptz1, "coarse_in_zoom": carried, "region": region,
                  "flag": flag, "inliers": inliers})
    conf = inliers / (inliers + 10) if flag is None else 0.3
    return DetectionResult(True, "background", region, conf, flag, ptz=ptz1, trace=trace,
                           elapsed_ms=1000 * (time.perf_counter() - t0))
