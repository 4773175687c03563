"""Grayscale rasters, sampling, gradients, homographies and regions.

Images are plain 2-D numpy arrays indexed ``img[y, x]``. Integer pixel
coordinates address pixel centres, so sampling at ``(3, 4)`` returns
``img[4, 3]`` exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage


class ImageTooSmall(ValueError):
    pass


class SingularTransform(ValueError):
    pass


LUMA = (0.299, 0.587, 0.114)


def as_gray(img) -> np.ndarray:
    """Coerce an array-like to a 2-D image; RGB(A) is converted with the luma rule."""
    a = np.asarray(img)
    if a.ndim == 3:
        rgb = a[..., :3].astype(np.float64)
        a = np.clip(np.rint(rgb @ np.array(LUMA)), 0, 255).astype(np.uint8)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {a.shape}")
    return a


def to_uint8(img) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I", "F"):
            return as_gray(np.asarray(im.convert("L")))
        return as_gray(np.asarray(im.convert("RGB")))


def write_png(path, img) -> None:
    a = np.asarray(img)
    if a.dtype != np.uint8:
        a = to_uint8(a)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(a, mode="L" if a.ndim == 2 else "RGB").save(path)


# ---------------------------------------------------------------- sampling

def bilinear_sample_many(img, xs, ys) -> np.ndarray:
    """Vectorised bilinear sampling; points outside ``[0,w-1]x[0,h-1]`` read 0."""
    a = np.asarray(img, dtype=np.float32)
    h, w = a.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.where(inside, xs, 0.0)
    yc = np.where(inside, ys, 0.0)
    x0 = np.minimum(np.floor(xc).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xc - x0).astype(np.float32)
    fy = (yc - y0).astype(np.float32)
    top = a[y0, x0] * (1 - fx) + a[y0, x1] * fx
    bot = a[y1, x0] * (1 - fx) + a[y1, x1] * fx
    out = top * (1 - fy) + bot * fy
    return np.where(inside, out, np.float32(0.0))


def bilinear_sample(img, x: float, y: float) -> float:
    """Bilinear interpolation at one point, unrounded."""
    return float(bilinear_sample_many(img, np.array([x]), np.array([y]))[0])


# ---------------------------------------------------------------- gradients

def sobel_gradients(img):
    """Return ``(gx, gy, mag)`` from 3x3 Sobel kernels; the 1-px border is zero."""
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape
    if h < 3 or w < 3:
        raise ImageTooSmall(f"sobel needs at least 3x3, got {w}x{h}")
    gx = np.zeros_like(a)
    gy = np.zeros_like(a)
    tl, tc, tr = a[:-2, :-2], a[:-2, 1:-1], a[:-2, 2:]
    ml, mr = a[1:-1, :-2], a[1:-1, 2:]
    bl, bc, br = a[2:, :-2], a[2:, 1:-1], a[2:, 2:]
    gx[1:-1, 1:-1] = (tr + 2 * mr + br) - (tl + 2 * ml + bl)
    gy[1:-1, 1:-1] = (bl + 2 * bc + br) - (tl + 2 * tc + tr)
    mag = np.hypot(gx, gy)
    return gx, gy, mag


# ---------------------------------------------------------------- homographies

def normalize_h(h) -> np.ndarray:
    m = np.asarray(h, dtype=np.float64).reshape(3, 3)
    if m[2, 2] != 0:
        return m / m[2, 2]
    return m.copy()


def check_invertible(h) -> np.ndarray:
    m = np.asarray(h, dtype=np.float64).reshape(3, 3)
    scale = np.abs(m).max()
    if scale == 0 or not np.all(np.isfinite(m)) or abs(np.linalg.det(m / scale)) < 1e-12:
        raise SingularTransform("homography is not invertible")
    return m


def invert_h(h) -> np.ndarray:
    return normalize_h(np.linalg.inv(check_invertible(h)))


def apply_h(h, pts) -> np.ndarray:
    """Map an ``(N, 2)`` array of points through a homography."""
    p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    m = np.asarray(h, dtype=np.float64)
    q = p @ m[:, :2].T + m[:, 2]
    return q[:, :2] / q[:, 2:3]


def translation(tx: float, ty: float) -> np.ndarray:
    return np.array([[1.0, 0, tx], [0, 1.0, ty], [0, 0, 1.0]])


def scaling(sx: float, sy: float | None = None) -> np.ndarray:
    return np.diag([sx, sx if sy is None else sy, 1.0])


def warp_homography(src, h, out_w: int, out_h: int, dtype=np.uint8) -> np.ndarray:
    """Inverse-mapping warp: destination pixel ``p`` reads ``src`` at ``h^-1 p``."""
    hinv = np.linalg.inv(check_invertible(h))
    # orient so the output centre has positive depth; w <= 0 lies past the horizon
    if hinv[2] @ [out_w / 2, out_h / 2, 1.0] < 0:
        hinv = -hinv
    ys, xs = np.mgrid[0:out_h, 0:out_w]
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    q = pts @ hinv[:, :2].T + hinv[:, 2]
    behind = q[:, 2] <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = np.where(behind, -1.0, q[:, 0] / q[:, 2])
        sy = np.where(behind, -1.0, q[:, 1] / q[:, 2])
    out = bilinear_sample_many(src, sx, sy).reshape(out_h, out_w)
    if dtype == np.uint8:
        return to_uint8(out)
    return out.astype(dtype)


# ---------------------------------------------------------------- regions

@dataclass(frozen=True)
class Region:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"region extent must be positive, got {self.w}x{self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2, self.y + self.h / 2)

    def corners(self) -> np.ndarray:
        return np.array([[self.x, self.y], [self.x + self.w, self.y],
                         [self.x + self.w, self.y + self.h], [self.x, self.y + self.h]])

    def expand(self, frac: float) -> "Region":
        """Grow by ``frac`` of the size on every side."""
        return Region(self.x - frac * self.w, self.y - frac * self.h,
                      self.w * (1 + 2 * frac), self.h * (1 + 2 * frac))

    def contains(self, pts) -> np.ndarray:
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        return ((p[:, 0] >= self.x) & (p[:, 0] <= self.x + self.w)
                & (p[:, 1] >= self.y) & (p[:, 1] <= self.y + self.h))

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d) -> "Region":
        return cls(float(d["x"]), float(d["y"]), float(d["w"]), float(d["h"]))

    @classmethod
    def from_points(cls, pts) -> "Region":
        p = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
        lo = p.min(axis=0)
        hi = p.max(axis=0)
        return cls(float(lo[0]), float(lo[1]), float(hi[0] - lo[0]), float(hi[1] - lo[1]))


def intersect(a: Region, b: Region) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Region, b: Region) -> float:
    inter = intersect(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def map_region(h, r: Region) -> Region:
    """Axis-aligned bounds of a region's corners after a homography."""
    return Region.from_points(apply_h(h, r.corners()))


def crop_resize(img, region: Region, scale: float) -> np.ndarray:
    """Resample ``region`` of ``img`` by ``scale``; outside pixels read 0.

    Output pixel ``(i, j)`` samples the source at ``region.xy + (j, i) / scale``.
    Downscaling pre-blurs to limit aliasing.
    """
    a = np.asarray(img, dtype=np.float32)
    if scale < 1:
        a = ndimage.gaussian_filter(a, 0.5 * math.sqrt(1 / scale ** 2 - 1), mode="nearest")
    out_w = max(int(round(region.w * scale)), 1)
    out_h = max(int(round(region.h * scale)), 1)
    h = scaling(scale) @ translation(-region.x, -region.y)
    return warp_homography(a, h, out_w, out_h)
