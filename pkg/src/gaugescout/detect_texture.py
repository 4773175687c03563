"""Meter detection by localising the camera against a meter map.

A handful of robot-pose candidates, each with a weight, is scored against
where the template's feature matches land in the view and how tightly they
cluster. The camera then zooms toward the leading candidate's prediction and
the cycle repeats a fixed number of times. The reported region is the meter
as projected from the final leading candidate.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .features import concentration_score, extract, match_ratio
from .imgcore import Region
from .ptzsim import CameraConfig, PtzState, RobotPose, plane_homography, point_zoom_command
from .template import DetectionResult, MeterTemplate


@dataclass(frozen=True)
class PoseCandidate:
    pose: RobotPose
    weight: float


@dataclass(frozen=True)
class MeterMapEntry:
    id: str
    position: tuple        # wall-plane metres (meter centre)
    diameter: float        # metres; longer side for rectangular meters
    shape: str = "circle"

    def __post_init__(self):
        if not self.diameter > 0:
            raise ValueError("meter diameter must be positive")

    def outline(self) -> np.ndarray:
        """Outline in wall-plane metres."""
        cx, cy = self.position
        if self.shape == "circle":
            t = np.linspace(0, 2 * np.pi, 720, endpoint=False)
            r = self.diameter / 2
            return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
        hw, hh = self.diameter / 2, self.diameter * 0.72 / 2
        return np.array([[cx - hw, cy - hh], [cx + hw, cy - hh], [cx + hw, cy + hh], [cx - hw, cy + hh]])

    def to_dict(self) -> dict:
        return {"id": self.id, "position": list(self.position), "diameter": self.diameter, "shape": self.shape}

    @classmethod
    def from_scene(cls, scene, meter_id="m0") -> "MeterMapEntry":
        m = scene.meter(meter_id)
        k = 1.0 / scene.px_per_meter
        return cls(m.id, (m.center[0] * k, m.center[1] * k), m.diameter * k, m.shape)


def save_meter_map(path, entries) -> None:
    Path(path).write_text(json.dumps([e.to_dict() for e in entries], indent=2))


def load_meter_map(path) -> list:
    return [MeterMapEntry(d["id"], tuple(d["position"]), float(d["diameter"]), d.get("shape", "circle"))
            for d in json.loads(Path(path).read_text())]


def gaussian_concentration_kernel(dist_px: float, concentration: float, sigma_px: float) -> float:
    return math.exp(-dist_px ** 2 / (2 * sigma_px ** 2)) * concentration


@dataclass(frozen=True)
class TextureConfig:
    n_candidates: int = 16
    rounds: int = 3
    sigma_xy: float = 0.15
    sigma_yaw: float = math.radians(3)
    sigma_px: float = 40.0          # at zoom 1, scaled by zoom
    eps: float = 1e-3
    prune: float = 1e-4             # relative to the max weight
    min_matches: int = 8
    ratio: float = 0.75
    max_fill: float = 0.8           # predicted diameter never exceeds this fraction of the short side
    centroid: str = "votes"         # "votes", "cluster" or "mean"; see score_candidates
    seed: int = 0
    kernel: Callable = gaussian_concentration_kernel


def init_candidates(nominal: RobotPose, n: int, sigma_xy: float, sigma_yaw: float, seed) -> list:
    """Nominal pose plus ``n - 1`` Gaussian draws around it, uniformly weighted."""
    if n < 1:
        raise ValueError("need at least one candidate")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = [PoseCandidate(nominal, 1.0 / n)]
    if n > 1:
        d = rng.normal(0.0, 1.0, (n - 1, 3)) * [sigma_xy, sigma_xy, sigma_yaw]
        for dx, dy, dyaw in d:
            out.append(PoseCandidate(replace(nominal, x=nominal.x + dx, y=nominal.y + dy, yaw=nominal.yaw + dyaw), 1.0 / n))
    return out


def predict_region(c, entry: MeterMapEntry, ptz: PtzState, cam: CameraConfig = CameraConfig()):
    """Project the mapped meter through a candidate's camera; returns ``(region, out_of_view)``.

    ``region`` is None when the meter lies behind the camera.
    """
    pose = c.pose if isinstance(c, PoseCandidate) else c
    H = plane_homography(1.0, pose, ptz, cam)     # wall metres -> view pixels
    p = entry.outline()
    q = p @ H[:, :2].T + H[:, 2]
    if np.any(q[:, 2] <= 0):
        return None, True
    pts = q[:, :2] / q[:, 2:3]
    r = Region.from_points(pts)
    out = r.x + r.w < 0 or r.y + r.h < 0 or r.x > cam.view_w - 1 or r.y > cam.view_h - 1
    return r, out


def cluster_centroid(points, start, radius: float, iters: int = 10):
    """Flat-kernel mean shift from ``start``: the centroid of the points within ``radius``.

    A handful of stray matches elsewhere in the frame would otherwise drag
    the plain mean away from the meter.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    c = np.asarray(start, dtype=np.float64)
    for _ in range(iters):
        near = np.hypot(p[:, 0] - c[0], p[:, 1] - c[1]) <= radius
        if not near.any():
            break
        nc = p[near].mean(axis=0)
        if np.allclose(nc, c):
            break
        c = nc
    return float(c[0]), float(c[1])


def normalize_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    s = w.sum()
    if not s > 0 or not np.isfinite(s):
        return np.full(len(w), 1.0 / len(w))
    return w / s


def update_weights(weights, scores, eps: float = 1e-3, prune: float = 1e-4):
    """Multiplicative update ``w_i <- w_i (s_i + eps)``, renormalised, then prune below ``prune * max``.

    Returns ``(new_weights, keep_mask)``; ``new_weights`` covers only kept candidates.
    """
    w = np.asarray(weights, dtype=np.float64) * (np.asarray(scores, dtype=np.float64) + eps)
    w = normalize_weights(w)
    keep = w >= prune * w.max()
    return normalize_weights(w[keep]), keep


def score_candidates(view_feats, cands: list, tmpl: MeterTemplate, entry: MeterMapEntry, ptz: PtzState,
                     cfg: TextureConfig = TextureConfig(), cam: CameraConfig = CameraConfig()):
    """One evidence update. ``view_feats`` is a DescriptorSet of the view (or the view image).

    The match position compared against each candidate's prediction is, by
    default, the mean-shift centre of per-match votes for the meter centre
    (view point plus the template offset to the meter centre, scaled to the
    leading candidate's predicted size). Features are not spread evenly over
    a meter face, so the plain centroid of matched points sits tens of pixels
    off-centre at large sizes; ``centroid="mean"`` restores it.

    Returns ``(candidates, info)``; ``info["flag"]`` is ``"NoEvidence"`` when nothing matched.
    """
    if not cands:
        raise ValueError("empty candidate set")
    if isinstance(view_feats, np.ndarray):
        view_feats = extract(view_feats)
    matches = match_ratio(tmpl.features, view_feats, cfg.ratio)
    info = {"matches": len(matches), "flag": None}
    if len(matches) == 0:
        info["flag"] = "NoEvidence"
        return list(cands), info
    pts = matches.train_points()
    preds = [predict_region(c, entry, ptz, cam)[0] for c in cands]
    lead = preds[int(np.argmax([c.weight for c in cands]))]
    radius = max(lead.w, lead.h) / 2 if lead is not None else cfg.sigma_px * ptz.zoom
    conc, centroid = concentration_score(pts, radius)
    if cfg.centroid == "votes":
        # each match votes for the meter centre through the template's own layout
        k = 2 * radius / tmpl.nominal_diameter
        votes = pts + (np.asarray(tmpl.meter_box.center) - matches.query_points()) * k
        centroid = cluster_centroid(votes, votes.mean(axis=0), radius)
    elif cfg.centroid == "cluster":
        centroid = cluster_centroid(pts, centroid, 1.5 * radius)
    sigma = cfg.sigma_px * ptz.zoom
    scores = []
    for p in preds:
        if p is None:
            scores.append(0.0)
            continue
        cx, cy = p.center
        scores.append(cfg.kernel(math.hypot(centroid[0] - cx, centroid[1] - cy), conc, sigma))
    w, keep = update_weights([c.weight for c in cands], scores, cfg.eps, cfg.prune)
    kept = [PoseCandidate(c.pose, float(wi)) for c, wi in zip((c for c, k in zip(cands, keep) if k), w)]
    info.update(concentration=conc, centroid=centroid, scores=scores, match_points=pts)
    return kept, info


def detect_texture(camera, nominal: RobotPose, tmpl: MeterTemplate, entry: MeterMapEntry,
                   cfg: TextureConfig = TextureConfig()) -> DetectionResult:
    t0 = time.perf_counter()
    cam = camera.config
    cands = init_candidates(nominal, cfg.n_candidates, cfg.sigma_xy, cfg.sigma_yaw, cfg.seed)
    trace = []
    region = None
    inside = 0
    first_found = None
    for rnd in range(cfg.rounds):
        ptz = camera.ptz
        view = camera.capture()
        cands, info = score_candidates(extract(view), cands, tmpl, entry, ptz, cfg, cam)
        if not cands:
            return DetectionResult(False, "texture", reason="CandidatesExhausted", trace=trace,
                                   elapsed_ms=1000 * (time.perf_counter() - t0))
        lead = max(range(len(cands)), key=lambda i: (cands[i].weight, -i))
        region, out = predict_region(cands[lead], entry, ptz, cam)
        pts = info.get("match_points")
        inside = int(region.contains(pts).sum()) if (region is not None and pts is not None) else 0
        if first_found is None and inside >= cfg.min_matches:
            first_found = rnd + 1
        trace.append({"round": rnd + 1, "ptz": ptz, "matches": info["matches"], "flag": info["flag"],
                      "inside": inside, "weights": [c.weight for c in cands], "lead": cands[lead].pose,
                      "region": region})
        if region is None or out:
            return DetectionResult(False, "texture", reason="OutOfView", ptz=ptz, trace=trace,
                                   elapsed_ms=1000 * (time.perf_counter() - t0))
        if rnd < cfg.rounds - 1:
            limit = cfg.max_fill * min(cam.view_w, cam.view_h) / max(region.w, region.h)
            factor = max(min(2.0, limit), 1.0)
            camera.move(point_zoom_command(region.center, ptz, factor, cam))
    ms = 1000 * (time.perf_counter() - t0)
    found = inside >= cfg.min_matches
    res = DetectionResult(found, "texture", region if found else None, inside / (inside + 10),
                          None if found else "TooFewMatchesInRegion", ptz=trace[-1]["ptz"],
                          trace=trace, elapsed_ms=ms)
    res.trace.append({"first_found_round": first_found, "predicted": region})
    return res
