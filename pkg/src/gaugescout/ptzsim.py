"""Planar-wall robot + PTZ camera simulator.

Geometry: the wall is the plane Z = 0 with X right and Y down, measured in
metres; wall texture pixel ``(u, v)`` sits at ``(u, v) / px_per_meter``. A
robot at pose ``(x, y, yaw, standoff)`` carries the camera at
``(x, y, -standoff)``. Camera orientation is ``R_y(yaw + pan) @ R_x(tilt)``;
positive pan looks right, positive tilt looks up.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Protocol

import numpy as np
from scipy import ndimage

from .imgcore import Region, apply_h, invert_h, to_uint8, warp_homography


@dataclass(frozen=True)
class CameraConfig:
    view_w: int = 640
    view_h: int = 480
    hfov_deg: float = 60.0
    zoom_max: float = 30.0
    pan_limit_deg: float = 60.0
    tilt_limit_deg: float = 30.0

    @property
    def f0(self) -> float:
        return (self.view_w / 2) / math.tan(math.radians(self.hfov_deg) / 2)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.view_w - 1) / 2, (self.view_h - 1) / 2)

    def intrinsics(self, zoom: float) -> np.ndarray:
        f = self.f0 * zoom
        cx, cy = self.center
        return np.array([[f, 0, cx], [0, f, cy], [0, 0, 1.0]])


@dataclass(frozen=True)
class PtzState:
    pan: float = 0.0
    tilt: float = 0.0
    zoom: float = 1.0

    def clamped(self, cam: CameraConfig) -> "PtzState":
        pl = math.radians(cam.pan_limit_deg)
        tl = math.radians(cam.tilt_limit_deg)
        return PtzState(float(np.clip(self.pan, -pl, pl)), float(np.clip(self.tilt, -tl, tl)),
                        float(np.clip(self.zoom, 1.0, cam.zoom_max)))


@dataclass(frozen=True)
class RobotPose:
    x: float
    y: float
    yaw: float = 0.0
    standoff: float = 5.0

    def __post_init__(self):
        if not self.standoff > 0:
            raise ValueError("standoff must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def camera_rotation(pose: RobotPose, ptz: PtzState) -> np.ndarray:
    return _rot_y(pose.yaw + ptz.pan) @ _rot_x(ptz.tilt)


def plane_homography(px_per_meter: float, pose: RobotPose, ptz: PtzState,
                     cam: CameraConfig = CameraConfig()) -> np.ndarray:
    """Wall-pixel -> view-pixel homography for a camera at ``pose`` with head state ``ptz``."""
    R = camera_rotation(pose, ptz)
    C = np.array([pose.x, pose.y, -pose.standoff])
    M = np.column_stack([[1 / px_per_meter, 0, 0], [0, 1 / px_per_meter, 0], -C])
    H = cam.intrinsics(ptz.zoom) @ R.T @ M
    return H / H[2, 2]


def view_homography(scene, pose: RobotPose, ptz: PtzState, cam: CameraConfig = CameraConfig()) -> np.ndarray:
    return plane_homography(scene.px_per_meter, pose, ptz, cam)


def head_transform(src: PtzState, dst: PtzState, cam: CameraConfig = CameraConfig()) -> np.ndarray:
    """View-pixel homography between two head states of a camera that did not translate."""
    R1 = _rot_y(src.pan) @ _rot_x(src.tilt)
    R2 = _rot_y(dst.pan) @ _rot_x(dst.tilt)
    H = cam.intrinsics(dst.zoom) @ R2.T @ R1 @ np.linalg.inv(cam.intrinsics(src.zoom))
    return H / H[2, 2]


def perturb_pose(nominal: RobotPose, seed, sigma_xy: float = 0.15, sigma_yaw: float = math.radians(3)) -> RobotPose:
    """Gaussian pose error; ``seed`` may be an int or a ``numpy.random.Generator``."""
    if sigma_xy < 0 or sigma_yaw < 0:
        raise ValueError("sigmas must be non-negative")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dx, dy = rng.normal(0.0, 1.0, 2) * sigma_xy
    dyaw = rng.normal(0.0, 1.0) * sigma_yaw
    return replace(nominal, x=nominal.x + float(dx), y=nominal.y + float(dy), yaw=nominal.yaw + float(dyaw))


def point_zoom_command(target, current: PtzState, zoom_factor: float,
                       cam: CameraConfig = CameraConfig()) -> PtzState:
    """Re-aim so the ray through view pixel ``target`` becomes the optical axis, then scale zoom."""
    if not zoom_factor > 0:
        raise ValueError("zoom_factor must be positive")
    cx, cy = cam.center
    f = cam.f0 * current.zoom
    ray = np.array([(target[0] - cx) / f, (target[1] - cy) / f, 1.0])
    d = _rot_y(current.pan) @ _rot_x(current.tilt) @ ray
    pan = math.atan2(d[0], d[2])
    tilt = math.atan2(-d[1], math.hypot(d[0], d[2]))
    return PtzState(pan, tilt, current.zoom * zoom_factor).clamped(cam)


# ---------------------------------------------------------------- rendering

def box_pyramid(img, levels: int) -> list:
    """Float32 mip chain built by 2x2 averaging (odd edges replicated)."""
    out = [np.asarray(img, dtype=np.float32)]
    for _ in range(levels):
        a = out[-1]
        if min(a.shape) < 2:
            break
        if a.shape[0] % 2:
            a = np.vstack([a, a[-1:]])
        if a.shape[1] % 2:
            a = np.hstack([a, a[:, -1:]])
        out.append(0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2]))
    return out


def _level_map(level: int) -> np.ndarray:
    """Level-0 pixel coordinates -> level-``level`` pixel coordinates."""
    k = 2.0 ** level
    off = (k - 1) / 2
    return np.array([[1 / k, 0, -off / k], [0, 1 / k, -off / k], [0, 0, 1.0]])


def local_scale(H_view_to_src, at) -> float:
    """Source pixels per destination pixel near destination point ``at``."""
    p = np.array([at, (at[0] + 1, at[1]), (at[0], at[1] + 1)], dtype=np.float64)
    q = apply_h(H_view_to_src, p)
    J = np.column_stack([q[1] - q[0], q[2] - q[0]])
    return math.sqrt(abs(np.linalg.det(J)))


def render_with_pyramid(pyramid: list, H_src_to_view: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Warp with trilinear mip selection so minified views do not alias."""
    hinv = invert_h(H_src_to_view)
    s = local_scale(hinv, ((out_w - 1) / 2, (out_h - 1) / 2))
    lod = min(max(math.log2(s), 0.0), len(pyramid) - 1)
    lo = int(math.floor(lod))
    frac = lod - lo

    def at(level):
        Hl = H_src_to_view @ np.linalg.inv(_level_map(level))
        return warp_homography(pyramid[level], Hl, out_w, out_h, dtype=np.float32)

    out = at(lo)
    if frac > 1e-6 and lo + 1 < len(pyramid):
        out = (1 - frac) * out + frac * at(lo + 1)
    return to_uint8(out)


def render_view(scene, pose: RobotPose, ptz: PtzState, cam: CameraConfig = CameraConfig()) -> np.ndarray:
    H = view_homography(scene, pose, ptz, cam)
    return render_with_pyramid(scene.pyramid, H, cam.view_w, cam.view_h)


def meter_region(scene, meter_id, pose: RobotPose, ptz: PtzState, cam: CameraConfig = CameraConfig()) -> Region:
    """Ground-truth bounds of a meter in the view rendered with ``pose``/``ptz``."""
    m = scene.meter(meter_id)
    return Region.from_points(apply_h(view_homography(scene, pose, ptz, cam), m.outline()))


# ---------------------------------------------------------------- camera providers

class Camera(Protocol):
    """What a detector needs from a camera: a head state, a capture and a move.

    A hardware adapter implements the same three members; ``move`` should
    block until the head has settled.
    """

    config: CameraConfig

    @property
    def ptz(self) -> PtzState: ...

    def capture(self) -> np.ndarray: ...

    def move(self, ptz: PtzState) -> None: ...


@dataclass(frozen=True)
class SensorModel:
    """Imaging non-idealities applied on top of the geometric render."""

    psf_sigma: float = 1.0      # optical blur, view pixels
    noise_sigma: float = 3.0    # additive read noise, grey levels

    def apply(self, img, rng: np.random.Generator) -> np.ndarray:
        if self.psf_sigma <= 0 and self.noise_sigma <= 0:
            return img
        a = img.astype(np.float32)
        if self.psf_sigma > 0:
            a = ndimage.gaussian_filter(a, self.psf_sigma, mode="nearest")
        if self.noise_sigma > 0:
            a = a + rng.normal(0.0, self.noise_sigma, a.shape).astype(np.float32)
        return to_uint8(a)


IDEAL_SENSOR = SensorModel(0.0, 0.0)


class SimulatedCamera:
    """Camera on a robot that stopped at ``true_pose`` in front of ``scene``.

    Frame ``k`` draws its sensor noise from ``default_rng([*seed, k])``; ``seed``
    is an int or a sequence of ints.
    """

    def __init__(self, scene, true_pose: RobotPose, cam: CameraConfig = CameraConfig(),
                 ptz: PtzState = PtzState(), sensor: SensorModel = SensorModel(), seed=0):
        self.scene = scene
        self.true_pose = true_pose
        self.config = cam
        self.sensor = sensor
        self.seed = seed
        self._ptz = ptz.clamped(cam)
        self.frames: list[tuple[PtzState, np.ndarray]] = []

    @property
    def ptz(self) -> PtzState:
        return self._ptz

    def capture(self) -> np.ndarray:
        img = render_view(self.scene, self.true_pose, self._ptz, self.config)
        img = self.sensor.apply(img, np.random.default_rng([*np.atleast_1d(self.seed).tolist(), len(self.frames)]))
        self.frames.append((self._ptz, img))
        return img

    def move(self, ptz: PtzState) -> None:
        self._ptz = ptz.clamped(self.config)

    def truth(self, meter_id=None) -> Region:
        """Ground-truth meter region for the current head state."""
        mid = self.scene.meters[0].id if meter_id is None else meter_id
        return meter_region(self.scene, mid, self.true_pose, self._ptz, self.config)
