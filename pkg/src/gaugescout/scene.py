"""Synthetic inspection walls with one analog meter each.

A scene is a large wall texture (>= 4000 px wide) plus meter placements and
the nominal robot pose of the waypoint. Everything is a pure function of the
seed. Meters are anti-aliased by 4x supersampling; the wall clutter (panels,
pipes, text plates, valve wheels, lamps, noise) is drawn at native
resolution and relies on the renderer's mip filtering.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imgcore import Region, apply_h, read_png, to_uint8, write_png
from .ptzsim import CameraConfig, PtzState, RobotPose, box_pyramid, meter_region

SCENE_SCHEMA = "gauge-scout-scene/1"
SUPERSAMPLE = 4
RECT_ASPECT = 0.72      # short side / long side of rectangular meters
WALL_W, WALL_H = 4096, 3072
PX_PER_METER = 500.0

_FONT = {
    "0": "111101101101111", "1": "010110010010111", "2": "111001111100111",
    "3": "111001111001111", "4": "101101111001001", "5": "111100111001111",
    "6": "111100111101111", "7": "111001010010010", "8": "111101111101111",
    "9": "111101111001111", "M": "101111111101101", "P": "110101110100100",
    "a": "000011101101011", "k": "100101110101101", "V": "101101101101010",
    "A": "010101111101101", "K": "101101110101101", "G": "111100101101111",
    "L": "100100100100111", "T": "111010010010010", "E": "111100110100111",
    "%": "101001010100101", "-": "000000111000000", ".": "000000000000010",
}
_SCALES = ["1", "1.6", "2.5", "4", "6", "10", "16", "25", "40", "60", "100"]
_UNITS = ["MPa", "kPa", "kV", "A", "KG", "%", "MPa"]


def glyph(ch: str) -> np.ndarray:
    return np.array([c == "1" for c in _FONT[ch]], dtype=bool).reshape(5, 3)


@dataclass(frozen=True)
class MeterPlacement:
    id: str
    shape: str              # "circle" | "rect"
    center: tuple           # wall pixels
    diameter: float         # wall pixels; longer side for rectangles
    reading: float          # needle position as a fraction of full scale, in [0, 1]
    design_seed: int

    def outline(self) -> np.ndarray:
        cx, cy = self.center
        if self.shape == "circle":
            t = np.linspace(0, 2 * np.pi, 720, endpoint=False)
            r = self.diameter / 2
            return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
        hw, hh = self.diameter / 2, self.diameter * RECT_ASPECT / 2
        return np.array([[cx - hw, cy - hh], [cx + hw, cy - hh], [cx + hw, cy + hh], [cx - hw, cy + hh]])

    def bounds(self) -> Region:
        return Region.from_points(self.outline())

    def to_dict(self) -> dict:
        return {"id": self.id, "shape": self.shape, "center": list(self.center), "diameter": self.diameter,
                "reading": self.reading, "design_seed": self.design_seed}

    @classmethod
    def from_dict(cls, d) -> "MeterPlacement":
        return cls(d["id"], d["shape"], tuple(d["center"]), float(d["diameter"]),
                   float(d["reading"]), int(d["design_seed"]))


@dataclass
class SceneSpec:
    wall: np.ndarray
    meters: list
    nominal_pose: RobotPose
    px_per_meter: float = PX_PER_METER
    seed: int = 0
    shape: str = "circle"
    diameter_at_wide: float = 0.0
    clutter_level: float = 0.5
    camera: CameraConfig = field(default_factory=CameraConfig)

    @cached_property
    def pyramid(self) -> list:
        return box_pyramid(self.wall, 7)

    def meter(self, meter_id) -> MeterPlacement:
        for m in self.meters:
            if m.id == meter_id:
                return m
        raise KeyError(meter_id)

    def to_json(self, wall_png: str | None = None) -> dict:
        gt = GroundTruth(self)
        return {
            "schema": SCENE_SCHEMA,
            "seed": self.seed,
            "shape": self.shape,
            "diameter_at_wide": self.diameter_at_wide,
            "clutter_level": self.clutter_level,
            "px_per_meter": self.px_per_meter,
            "wall_size": [int(self.wall.shape[1]), int(self.wall.shape[0])],
            "wall_png": wall_png,
            "camera": self.camera.__dict__.copy(),
            "nominal_pose": self.nominal_pose.to_dict(),
            "meters": [m.to_dict() for m in self.meters],
            "ground_truth_wide": {m.id: gt.region(m.id, self.nominal_pose).to_dict() for m in self.meters},
        }

    def save(self, json_path, wall_png=None) -> None:
        json_path = Path(json_path)
        wall_png = Path(wall_png) if wall_png else json_path.with_suffix(".wall.png")
        write_png(wall_png, self.wall)
        doc = self.to_json(str(wall_png.relative_to(json_path.parent)
                               if wall_png.parent == json_path.parent else wall_png))
        json_path.write_text(json.dumps(doc, indent=2))

    @classmethod
    def load(cls, json_path) -> "SceneSpec":
        json_path = Path(json_path)
        d = json.loads(json_path.read_text())
        if d.get("schema") != SCENE_SCHEMA:
            raise ValueError(f"unsupported scene schema {d.get('schema')!r}")
        wall_path = Path(d["wall_png"])
        if not wall_path.is_absolute():
            wall_path = json_path.parent / wall_path
        return cls(read_png(wall_path), [MeterPlacement.from_dict(m) for m in d["meters"]],
                   RobotPose(**d["nominal_pose"]), d["px_per_meter"], d["seed"], d["shape"],
                   d["diameter_at_wide"], d["clutter_level"], CameraConfig(**d["camera"]))


@dataclass
class GroundTruth:
    scene: SceneSpec

    def region(self, meter_id, pose: RobotPose, ptz: PtzState = PtzState(), cam: CameraConfig | None = None) -> Region:
        return meter_region(self.scene, meter_id, pose, ptz, cam or self.scene.camera)


# ---------------------------------------------------------------- drawing helpers

class _Canvas:
    """Supersampled paint buffer over a wall-pixel window."""

    def __init__(self, x0: int, y0: int, w: int, h: int, ss: int = SUPERSAMPLE, fill=None):
        self.x0, self.y0, self.w, self.h, self.ss = x0, y0, w, h, ss
        self.val = np.zeros((h * ss, w * ss), np.float32)
        self.cov = np.zeros((h * ss, w * ss), np.float32)
        if fill is not None:
            self.val[:] = fill
            self.cov[:] = 1

    def paint(self, bbox, mask_fn, value) -> None:
        """Paint ``value`` where ``mask_fn(X, Y)`` holds, X/Y in wall pixels, inside ``bbox``."""
        ss = self.ss
        bx0, by0, bx1, by1 = bbox
        i0 = max(int(math.floor((by0 - self.y0 + 0.5) * ss)), 0)
        i1 = min(int(math.ceil((by1 - self.y0 + 0.5) * ss)) + 1, self.h * ss)
        j0 = max(int(math.floor((bx0 - self.x0 + 0.5) * ss)), 0)
        j1 = min(int(math.ceil((bx1 - self.x0 + 0.5) * ss)) + 1, self.w * ss)
        if i1 <= i0 or j1 <= j0:
            return
        ys = self.y0 - 0.5 + (np.arange(i0, i1) + 0.5) / ss
        xs = self.x0 - 0.5 + (np.arange(j0, j1) + 0.5) / ss
        X, Y = np.meshgrid(xs, ys)
        m = mask_fn(X, Y)
        if callable(value):
            v = value(X, Y)
            self.val[i0:i1, j0:j1][m] = v[m]
        else:
            self.val[i0:i1, j0:j1][m] = value
        self.cov[i0:i1, j0:j1][m] = 1

    def resolve(self):
        ss = self.ss
        pre = (self.val * self.cov).reshape(self.h, ss, self.w, ss).mean(axis=(1, 3))
        alpha = self.cov.reshape(self.h, ss, self.w, ss).mean(axis=(1, 3))
        return pre, alpha


def _disk(cx, cy, r):
    return (cx - r, cy - r, cx + r, cy + r), lambda X, Y: (X - cx) ** 2 + (Y - cy) ** 2 <= r * r


def _ring(cx, cy, r0, r1, a0=None, a1=None):
    def m(X, Y):
        d2 = (X - cx) ** 2 + (Y - cy) ** 2
        ok = (d2 >= r0 * r0) & (d2 <= r1 * r1)
        if a0 is not None:
            a = np.arctan2(-(Y - cy), X - cx)
            ok &= _angle_between(a, a0, a1)
        return ok
    return (cx - r1, cy - r1, cx + r1, cy + r1), m


def _angle_between(a, lo, hi):
    span = (hi - lo) % (2 * np.pi)
    return ((a - lo) % (2 * np.pi)) <= span


def _segment(x0, y0, x1, y1, w0, w1=None):
    """Tapered bar from (x0,y0) (half-width w0) to (x1,y1) (half-width w1)."""
    w1 = w0 if w1 is None else w1
    dx, dy = x1 - x0, y1 - y0
    L = math.hypot(dx, dy)
    ux, uy = dx / L, dy / L
    pad = max(w0, w1)

    def m(X, Y):
        t = (X - x0) * ux + (Y - y0) * uy
        n = np.abs(-(X - x0) * uy + (Y - y0) * ux)
        return (t >= 0) & (t <= L) & (n <= w0 + (w1 - w0) * np.clip(t / L, 0, 1))
    return (min(x0, x1) - pad, min(y0, y1) - pad, max(x0, x1) + pad, max(y0, y1) + pad), m


def _rect(x0, y0, x1, y1):
    return (x0, y0, x1, y1), lambda X, Y: (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)


def _text(canvas: _Canvas, s: str, cx, cy, cell, value) -> None:
    """Centered string of 3x5 glyphs, one cell of spacing between characters."""
    n = len(s)
    total = n * 3 * cell + (n - 1) * cell
    x = cx - total / 2
    y = cy - 2.5 * cell
    for ch in s:
        g = glyph(ch)
        for r, c in zip(*np.nonzero(g)):
            bb, m = _rect(x + c * cell, y + r * cell, x + (c + 1) * cell, y + (r + 1) * cell)
            canvas.paint(bb, m, value)
        x += 4 * cell


# ---------------------------------------------------------------- meters

@dataclass(frozen=True)
class _Design:
    scale_label: list
    unit: str
    tag: str
    red_zone: bool
    face: float
    bezel: float


def _design(seed: int) -> _Design:
    rng = np.random.default_rng([seed, 7])
    top = _SCALES[rng.integers(len(_SCALES))]
    unit = _UNITS[rng.integers(len(_UNITS))]
    tag = "".join(str(d) for d in rng.integers(0, 10, 4))
    return _Design([top], unit, tag, bool(rng.random() < 0.7),
                   float(rng.uniform(222, 245)), float(rng.uniform(30, 70)))


def _tick_labels(top: str, n: int) -> list:
    v = float(top)
    out = []
    for i in range(n):
        x = v * i / (n - 1)
        out.append(("%g" % round(x, 1)).replace("0.", "."))
    return out


def draw_meter(canvas: _Canvas, m: MeterPlacement, needle_frac: float | None = None) -> None:
    """Paint meter ``m`` onto ``canvas`` (wall-pixel coordinates)."""
    d = _design(m.design_seed)
    frac = m.reading if needle_frac is None else needle_frac
    cx, cy = m.center
    ink = 28.0
    if m.shape == "circle":
        R = m.diameter / 2
        canvas.paint(*_disk(cx, cy, R), d.bezel)
        canvas.paint(*_ring(cx, cy, 0.895 * R, 0.935 * R), d.bezel + 100)
        canvas.paint(*_disk(cx, cy, 0.895 * R), d.face)
        a_start, sweep = math.radians(225), math.radians(270)
        if d.red_zone:
            canvas.paint(*_ring(cx, cy, 0.70 * R, 0.80 * R, a_start - sweep, a_start - sweep + math.radians(55)), 105)
        for k in range(19):
            a = a_start - sweep * k / 18
            major = k % 2 == 0
            r0 = (0.66 if major else 0.74) * R
            ca, sa = math.cos(a), -math.sin(a)
            canvas.paint(*_segment(cx + r0 * ca, cy + r0 * sa, cx + 0.86 * R * ca, cy + 0.86 * R * sa,
                                   (0.022 if major else 0.011) * R), ink)
        canvas.paint(*_ring(cx, cy, 0.855 * R, 0.87 * R, a_start - sweep, a_start), ink)
        labels = _tick_labels(d.scale_label[0], 4)
        for k, lab in enumerate(labels):
            a = a_start - sweep * k / 3
            _text(canvas, lab, cx + 0.50 * R * math.cos(a), cy - 0.50 * R * math.sin(a), 0.034 * R, ink)
        canvas.paint(*_rect(cx - 0.27 * R, cy + 0.36 * R, cx + 0.27 * R, cy + 0.54 * R), 52)
        _text(canvas, d.unit, cx, cy + 0.45 * R, 0.028 * R, 225)
        _text(canvas, d.tag, cx, cy - 0.22 * R, 0.022 * R, 90)
        a = a_start - sweep * frac
        ca, sa = math.cos(a), -math.sin(a)
        canvas.paint(*_segment(cx - 0.16 * R * ca, cy - 0.16 * R * sa, cx + 0.80 * R * ca, cy + 0.80 * R * sa,
                               0.035 * R, 0.006 * R), 18)
        canvas.paint(*_disk(cx, cy, 0.075 * R), 60)
        canvas.paint(*_disk(cx, cy, 0.03 * R), 175)
        return
    W = m.diameter
    Hh = W * RECT_ASPECT
    x0, y0, x1, y1 = cx - W / 2, cy - Hh / 2, cx + W / 2, cy + Hh / 2
    canvas.paint(*_rect(x0, y0, x1, y1), d.bezel)
    ins = 0.06 * W
    canvas.paint(*_rect(x0 + ins, y0 + ins, x1 - ins, y1 - ins), d.face)
    for sx, sy in ((x0, y0), (x1, y0), (x0, y1), (x1, y1)):
        canvas.paint(*_disk(sx + np.sign(cx - sx) * 0.03 * W, sy + np.sign(cy - sy) * 0.03 * W, 0.016 * W), 165)
    px, py = cx, cy + 0.22 * W
    a0, a1 = math.radians(42), math.radians(138)
    canvas.paint(*_ring(px, py, 0.338 * W, 0.346 * W, a0, a1), ink)
    if d.red_zone:
        canvas.paint(*_ring(px, py, 0.30 * W, 0.335 * W, a0, a0 + math.radians(18)), 105)
    for k in range(13):
        a = a1 - (a1 - a0) * k / 12
        major = k % 3 == 0
        ca, sa = math.cos(a), -math.sin(a)
        r1 = (0.40 if major else 0.385) * W
        canvas.paint(*_segment(px + 0.342 * W * ca, py + 0.342 * W * sa, px + r1 * ca, py + r1 * sa,
                               (0.009 if major else 0.005) * W), ink)
    labels = _tick_labels(d.scale_label[0], 5)
    for k, lab in enumerate(labels):
        a = a1 - (a1 - a0) * k / 4
        _text(canvas, lab, px + 0.445 * W * math.cos(a), py - 0.445 * W * math.sin(a), 0.014 * W, ink)
    a = a1 - (a1 - a0) * frac
    ca, sa = math.cos(a), -math.sin(a)
    canvas.paint(*_segment(px, py, px + 0.41 * W * ca, py + 0.41 * W * sa, 0.012 * W, 0.003 * W), 18)
    canvas.paint(*_rect(cx - 0.13 * W, py - 0.02 * W, cx + 0.13 * W, y1 - ins), 66)
    canvas.paint(*_rect(x0 + ins + 0.03 * W, py - 0.05 * W, x0 + ins + 0.2 * W, py + 0.02 * W), 48)
    _text(canvas, d.unit, x0 + ins + 0.115 * W, py - 0.015 * W, 0.011 * W, 220)
    _text(canvas, d.tag, x1 - ins - 0.12 * W, py - 0.015 * W, 0.010 * W, 80)


def render_meter_patch(m: MeterPlacement, diameter_px: float, margin: float = 0.08,
                       background: float = 128.0, needle_frac: float | None = None) -> np.ndarray:
    """Fronto-parallel image of a meter's design at ``diameter_px`` (longer side)."""
    k = diameter_px / m.diameter
    H = m.diameter * (RECT_ASPECT if m.shape == "rect" else 1.0)
    w = int(math.ceil(diameter_px * (1 + 2 * margin)))
    h = int(math.ceil(H * k + 2 * margin * diameter_px))
    mm = MeterPlacement(m.id, m.shape, ((w - 1) / 2, (h - 1) / 2), diameter_px, m.reading, m.design_seed)
    c = _Canvas(0, 0, w, h, fill=background)
    draw_meter(c, mm, needle_frac)
    pre, _ = c.resolve()
    return to_uint8(pre)


# ---------------------------------------------------------------- wall

def _noise(rng, h, w, amp):
    out = np.zeros((h // 4, w // 4), np.float32)
    for cells, a in ((6, 1.0), (24, 0.5), (96, 0.25), (384, 0.12)):
        g = rng.normal(0, 1, (max(2, cells * h // w), cells)).astype(np.float32)
        out += a * ndimage.zoom(g, (out.shape[0] / g.shape[0], out.shape[1] / g.shape[1]), order=1)[:out.shape[0], :out.shape[1]]
    full = ndimage.zoom(out, 4, order=1)
    return amp * full[:h, :w]


def _fill_rect(wall, x0, y0, x1, y1, v):
    h, w = wall.shape
    x0, x1 = int(max(0, x0)), int(min(w, x1))
    y0, y1 = int(max(0, y0)), int(min(h, y1))
    if x1 > x0 and y1 > y0:
        if callable(v):
            wall[y0:y1, x0:x1] = v(wall[y0:y1, x0:x1], y0, x0)
        else:
            wall[y0:y1, x0:x1] = v


def _fill_disk(wall, cx, cy, r, v, r_in=0.0):
    h, w = wall.shape
    x0, x1 = int(max(0, cx - r - 1)), int(min(w, cx + r + 2))
    y0, y1 = int(max(0, cy - r - 1)), int(min(h, cy + r + 2))
    if x1 <= x0 or y1 <= y0:
        return
    Y, X = np.mgrid[y0:y1, x0:x1]
    d2 = (X - cx) ** 2 + (Y - cy) ** 2
    m = (d2 <= r * r) & (d2 >= r_in * r_in)
    wall[y0:y1, x0:x1][m] = v


def _wall_text(wall, rng, x, y, cell, n, v):
    chars = list(_FONT)
    for i in range(n):
        g = glyph(chars[rng.integers(len(chars))])
        for r, c in zip(*np.nonzero(g)):
            _fill_rect(wall, x + (4 * i + c) * cell, y + r * cell, x + (4 * i + c + 1) * cell, y + (r + 1) * cell, v)


def _overlaps(a, b, pad=0.0):
    return not (a[2] + pad < b[0] or b[2] + pad < a[0] or a[3] + pad < b[1] or b[3] + pad < a[1])


def make_wall(rng, clutter: float, keepout, w: int = WALL_W, h: int = WALL_H) -> np.ndarray:
    """Industrial-looking clutter; round decoys avoid the ``keepout`` box (x0, y0, x1, y1)."""
    wall = 118 + _noise(rng, h, w, 22.0)
    # panels
    for _ in range(int(8 + 14 * clutter)):
        pw, ph = rng.uniform(250, 1300), rng.uniform(250, 1100)
        x, y = rng.uniform(-100, w - pw + 100), rng.uniform(-100, h - ph + 100)
        base = rng.uniform(55, 205)
        edge = base + rng.choice([-1, 1]) * rng.uniform(35, 70)
        _fill_rect(wall, x, y, x + pw, y + ph, lambda a, *_: 0.25 * a + 0.75 * base)
        b = rng.uniform(6, 14)
        for bb in ((x, y, x + pw, y + b), (x, y + ph - b, x + pw, y + ph), (x, y, x + b, y + ph), (x + pw - b, y, x + pw, y + ph)):
            _fill_rect(wall, *bb, edge)
        for sx, sy in ((x + 3 * b, y + 3 * b), (x + pw - 3 * b, y + 3 * b), (x + 3 * b, y + ph - 3 * b), (x + pw - 3 * b, y + ph - 3 * b)):
            _fill_disk(wall, sx, sy, rng.uniform(7, 12), edge)
        if rng.random() < 0.6:
            for _ in range(int(rng.integers(1, 4))):
                cell = rng.uniform(5, 13)
                n = int(rng.integers(3, 9))
                tx = x + rng.uniform(0.05, 0.5) * pw
                ty = y + rng.uniform(0.1, 0.85) * ph
                plate = rng.uniform(20, 235)
                ink = 255 - plate if abs(plate - 128) > 40 else (20 if plate > 128 else 235)
                _fill_rect(wall, tx - cell, ty - cell, tx + (4 * n) * cell, ty + 6 * cell, plate)
                _wall_text(wall, rng, tx, ty, cell, n, ink)
    # conduit and pipes with cylindrical shading
    for _ in range(int(3 + 6 * clutter)):
        width = rng.uniform(30, 110)
        lo, hi = rng.uniform(40, 90), rng.uniform(170, 230)
        prof = lo + (hi - lo) * np.sin(np.linspace(0.15, np.pi - 0.15, max(int(width), 2))) ** 0.7
        if rng.random() < 0.55:
            y = int(rng.uniform(0, h - width))
            x0, x1 = int(rng.uniform(-200, w / 2)), int(rng.uniform(w / 2, w + 200))
            x0, x1 = max(0, x0), min(w, x1)
            wall[y:y + len(prof), x0:x1] = prof[:, None][: h - y]
            for fx in rng.uniform(x0, x1, int(rng.integers(1, 4))):
                _fill_rect(wall, fx - 0.35 * width, y - 0.3 * width, fx + 0.35 * width, y + 1.3 * width, lo + 25)
        else:
            x = int(rng.uniform(0, w - width))
            y0, y1 = max(0, int(rng.uniform(-200, h / 2))), min(h, int(rng.uniform(h / 2, h + 200)))
            wall[y0:y1, x:x + len(prof)] = prof[None, :][:, : w - x]
            for fy in rng.uniform(y0, y1, int(rng.integers(1, 4))):
                _fill_rect(wall, x - 0.3 * width, fy - 0.35 * width, x + 1.3 * width, fy + 0.35 * width, lo + 25)
    # loose text plates and hazard stripes
    for _ in range(int(10 + 30 * clutter)):
        cell = rng.uniform(4, 12)
        n = int(rng.integers(2, 8))
        x, y = rng.uniform(0, w - 40 * cell), rng.uniform(0, h - 8 * cell)
        plate = rng.uniform(15, 240)
        ink = 20 if plate > 128 else 235
        _fill_rect(wall, x - cell, y - cell, x + 4 * n * cell, y + 6 * cell, plate)
        _wall_text(wall, rng, x, y, cell, n, ink)
    for _ in range(int(1 + 3 * clutter)):
        sw, sh = rng.uniform(200, 600), rng.uniform(60, 140)
        x, y = rng.uniform(0, w - sw), rng.uniform(0, h - sh)
        period = rng.uniform(30, 60)
        _fill_rect(wall, x, y, x + sw, y + sh,
                   lambda a, y0, x0: np.where(((np.arange(a.shape[1])[None, :] + np.arange(a.shape[0])[:, None]) // (period / 2)) % 2 == 0, 35, 215))
    # round decoys: valve wheels and indicator lamps
    for _ in range(int(3 + 8 * clutter)):
        for _try in range(20):
            r = rng.uniform(45, 220)
            cx, cy = rng.uniform(r, w - r), rng.uniform(r, h - r)
            if not _overlaps((cx - r, cy - r, cx + r, cy + r), keepout, pad=40):
                break
        else:
            continue
        if rng.random() < 0.5:
            v = rng.uniform(30, 90)
            _fill_disk(wall, cx, cy, r, v, r_in=0.82 * r)
            n_spokes = int(rng.integers(3, 6))
            a = rng.uniform(0, 2 * np.pi)
            for _ in range(n_spokes):
                for t in np.linspace(0.15 * r, 0.85 * r, int(r)):
                    _fill_disk(wall, cx + t * np.cos(a), cy + t * np.sin(a), 0.06 * r, v)
                a += 2 * np.pi / 5
            _fill_disk(wall, cx, cy, 0.18 * r, v + 40)
        else:
            _fill_disk(wall, cx, cy, r, rng.uniform(20, 70))
            _fill_disk(wall, cx, cy, 0.75 * r, rng.uniform(150, 250))
    wall += ndimage.gaussian_filter(rng.normal(0, 3.0, (h // 2, w // 2)).astype(np.float32), 0.7).repeat(2, 0).repeat(2, 1)[:h, :w]
    return wall


def generate_scene(seed: int, shape: str = "circle", meter_diameter_at_wide: float = 120.0,
                   clutter_level: float = 0.5, cam: CameraConfig = CameraConfig(),
                   standoff: float = 5.0) -> tuple[SceneSpec, GroundTruth]:
    """Deterministic wall + one meter whose apparent size at zoom 1 and nominal pose is exact."""
    if shape not in ("circle", "rect"):
        raise ValueError(f"unknown meter shape {shape!r}")
    if not 8 <= meter_diameter_at_wide <= 400:
        raise ValueError("meter diameter at wide must be in [8, 400] px")
    rng = np.random.default_rng([seed, 1 if shape == "circle" else 2, int(round(meter_diameter_at_wide * 16))])
    ppm = PX_PER_METER
    view_ppm = cam.f0 / standoff             # view pixels per metre at zoom 1
    diam = meter_diameter_at_wide * ppm / view_ppm
    nominal = RobotPose(WALL_W / 2 / ppm, WALL_H / 2 / ppm, 0.0, standoff)
    half_w = cam.view_w / 2 / view_ppm
    half_h = cam.view_h / 2 / view_ppm
    d_m = meter_diameter_at_wide / view_ppm
    h_m = d_m * (RECT_ASPECT if shape == "rect" else 1.0)
    ox = rng.uniform(-1, 1) * max(0.0, min(1.0, half_w - d_m / 2 - 0.8))
    oy = rng.uniform(-1, 1) * max(0.0, min(0.6, half_h - h_m / 2 - 0.6))
    center = ((nominal.x + ox) * ppm, (nominal.y + oy) * ppm)
    meter = MeterPlacement("m0", shape, (float(center[0]), float(center[1])), float(diam),
                           float(rng.uniform(0.15, 0.85)), int(rng.integers(0, 2**31 - 1)))
    b = meter.bounds()
    wall = make_wall(rng, clutter_level, (b.x, b.y, b.x + b.w, b.y + b.h))
    pad = 4
    x0, y0 = int(math.floor(b.x)) - pad, int(math.floor(b.y)) - pad
    x1, y1 = int(math.ceil(b.x + b.w)) + pad, int(math.ceil(b.y + b.h)) + pad
    canvas = _Canvas(x0, y0, x1 - x0, y1 - y0)
    draw_meter(canvas, meter)
    pre, alpha = canvas.resolve()
    wall[y0:y1, x0:x1] = wall[y0:y1, x0:x1] * (1 - alpha) + pre
    spec = SceneSpec(to_uint8(wall), [meter], nominal, ppm, seed, shape,
                     float(meter_diameter_at_wide), float(clutter_level), cam)
    return spec, GroundTruth(spec)


def nominal_view_region(scene: SceneSpec, meter_id="m0") -> Region:
    return GroundTruth(scene).region(meter_id, scene.nominal_pose)


def outline_in_view(H, m: MeterPlacement) -> np.ndarray:
    return apply_h(H, m.outline())
