"""Circle proposals from a gradient Hough transform, confirmed by template features."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage

from .features import extract, match_ratio
from .imgcore import Region, as_gray, crop_resize, sobel_gradients
from .template import DetectionResult, MeterTemplate


class BadRadiusRange(ValueError):
    pass


@dataclass(frozen=True)
class CircleHypothesis:
    cx: float
    cy: float
    r: float
    votes: float

    def region(self) -> Region:
        return Region(self.cx - self.r, self.cy - self.r, 2 * self.r, 2 * self.r)


@dataclass(frozen=True)
class ShapeConfig:
    r_min: float = 12
    r_max: float | None = None          # default min(w, h) / 3
    vote_threshold: float = 0.4
    max_circles: int = 12
    fan_deg: float = 10.0
    fan_rays: int = 1
    min_matches: int = 8
    margin: float = 0.2
    ratio: float = 0.75


def _thin_edges(gx, gy, mag, thr):
    """Keep pixels above ``thr`` that are maxima across the edge (4-direction quantised)."""
    ang = (np.rad2deg(np.arctan2(gy, gx)) + 180.0) % 180.0
    q = np.zeros(mag.shape, np.int8)
    q[(ang >= 22.5) & (ang < 67.5)] = 1
    q[(ang >= 67.5) & (ang < 112.5)] = 2
    q[(ang >= 112.5) & (ang < 157.5)] = 3
    p = np.pad(mag, 1)
    c = p[1:-1, 1:-1]
    nbr = {
        0: (p[1:-1, :-2], p[1:-1, 2:]),
        1: (p[:-2, :-2], p[2:, 2:]),
        2: (p[:-2, 1:-1], p[2:, 1:-1]),
        3: (p[:-2, 2:], p[2:, :-2]),
    }
    keep = np.zeros(mag.shape, bool)
    for k, (a, b) in nbr.items():
        keep |= (q == k) & (c >= a) & (c >= b)
    return keep & (mag > thr)


@numba.njit(cache=True)
def _vote(acc, xs, ys, theta, offsets, r_min, r_max):
    nb, h, w = acc.shape
    for i in range(xs.shape[0]):
        for f in range(offsets.shape[0]):
            a = theta[i] + offsets[f]
            ca = math.cos(a)
            sa = math.sin(a)
            for sign in (-1.0, 1.0):
                for d in range(r_min, r_max + 1):
                    cx = int(round(xs[i] + sign * d * ca))
                    cy = int(round(ys[i] + sign * d * sa))
                    if cx < 0 or cy < 0 or cx >= w or cy >= h:
                        continue
                    acc[(d - r_min) // 2, cy, cx] += 0.5


def hough_circles(img, r_min: float, r_max: float, vote_threshold: float = 0.4,
                  max_circles: int = 12, fan_deg: float = 10.0, fan_rays: int = 1) -> list:
    """Gradient-directed 3-D Hough transform for circles.

    Thinned edge pixels (Sobel magnitude above 0.2 x max) cast votes along
    both gradient directions (optionally over a fan of ``fan_rays`` rays
    spanning ``+-fan_deg``) for every centre distance in ``[r_min, r_max]``. Bins are
    1 px in position and 2 px in radius; support is pooled over a 3x3 spatial
    window and divided by the circumference, so a complete circle scores ~1
    regardless of radius.
    """
    a = as_gray(img)
    h, w = a.shape
    r_min_i, r_max_i = int(math.floor(r_min)), int(math.ceil(r_max))
    if not (4 <= r_min < r_max <= min(w, h) / 2):
        raise BadRadiusRange(f"need 4 <= r_min < r_max <= {min(w, h) / 2}, got [{r_min}, {r_max}]")
    gx, gy, mag = sobel_gradients(ndimage.gaussian_filter(a.astype(np.float64), 1.0))
    if mag.max() <= 0:
        return []
    edges = _thin_edges(gx, gy, mag, 0.2 * mag.max())
    ys, xs = np.nonzero(edges)
    if len(xs) == 0:
        return []
    theta = np.arctan2(gy[ys, xs], gx[ys, xs])
    nb = (r_max_i - r_min_i) // 2 + 1
    acc = np.zeros((nb, h, w), np.float32)
    offsets = np.deg2rad(np.linspace(-fan_deg, fan_deg, fan_rays)) if fan_rays > 1 else np.zeros(1)
    _vote(acc, xs.astype(np.float64), ys.astype(np.float64), theta, offsets, r_min_i, r_max_i)
    pooled = ndimage.uniform_filter(acc, size=(1, 3, 3), mode="constant") * 9.0
    radii = r_min_i + 2 * np.arange(nb) + 0.5
    score = np.minimum(pooled / (2 * np.pi * radii)[:, None, None], 1.0)
    cand = np.argwhere(score >= vote_threshold)
    if len(cand) == 0:
        return []
    vals = score[cand[:, 0], cand[:, 1], cand[:, 2]]
    order = np.lexsort((cand[:, 2], cand[:, 1], cand[:, 0], -vals))
    taken = np.zeros(score.shape, bool)
    out = []
    for k in order:
        b, y, x = cand[k]
        if taken[b, y, x]:
            continue
        b0, b1 = max(b - 1, 0), min(b + 2, nb)
        y0, y1 = max(y - 2, 0), min(y + 3, h)
        x0, x1 = max(x - 2, 0), min(x + 3, w)
        win = score[b0:b1, y0:y1, x0:x1]
        if vals[k] < win.max():
            continue
        taken[b0:b1, y0:y1, x0:x1] = True
        # sub-pixel centre from the pooled-vote centroid; radius from the bin pair
        loc = pooled[b, max(y - 1, 0):y + 2, max(x - 1, 0):x + 2]
        yy, xx = np.mgrid[max(y - 1, 0):min(y + 2, h), max(x - 1, 0):min(x + 2, w)]
        wsum = loc.sum()
        cy = float((loc * yy).sum() / wsum) if wsum > 0 else float(y)
        cx = float((loc * xx).sum() / wsum) if wsum > 0 else float(x)
        rb = pooled[b0:b1, y, x] / (2 * np.pi * radii[b0:b1])
        r = float((rb * radii[b0:b1]).sum() / rb.sum()) if rb.sum() > 0 else float(radii[b])
        out.append(CircleHypothesis(cx, cy, r, float(vals[k])))
        if len(out) >= max_circles:
            break
    return out


def score_circle(img, c: CircleHypothesis, tmpl: MeterTemplate, ratio: float = 0.75,
                 margin: float = 0.2) -> tuple[int, Region]:
    """Count ratio-test matches between the template and the circle's rescaled neighbourhood."""
    region = c.region()
    crop_box = region.expand(margin)
    k = tmpl.nominal_diameter / (2 * c.r)
    try:
        crop = crop_resize(img, crop_box, k)
        feats = extract(crop)
    except ValueError:
        return 0, region
    m = match_ratio(feats, tmpl.features, ratio)
    return len(m), region


def detect_shape(view, tmpl: MeterTemplate, cfg: ShapeConfig = ShapeConfig()) -> DetectionResult:
    t0 = time.perf_counter()
    view = as_gray(view)
    h, w = view.shape
    r_max = cfg.r_max if cfg.r_max is not None else min(w, h) / 3
    circles = hough_circles(view, cfg.r_min, r_max, cfg.vote_threshold, cfg.max_circles, 
                           cfg.fan_deg, cfg.fan_rays)
    trace = [{"stage": "hough", "circles": [c.__dict__ for c in circles]}]
    if not circles:
        return DetectionResult(False, "shape", reason="NoCircles", trace=trace,
                               elapsed_ms=1000 * (time.perf_counter() - t0))
    scored = [score_circle(view, c, tmpl, cfg.ratio, cfg.margin) for c in circles]
    counts = [s[0] for s in scored]
    trace.append({"stage": "score", "match_counts": counts})
    best = int(np.argmax(counts))      # first index wins ties
    n = counts[best]
    ms = 1000 * (time.perf_counter() - t0)
    if n < cfg.min_matches:
        return DetectionResult(False, "shape", reason="NoCircleConfirmed", trace=trace, elapsed_ms=ms,
                               confidence=n / (n + 10))
    return DetectionResult(True, "shape", scored[best][1], n / (n + 10), trace=trace, elapsed_ms=ms)
