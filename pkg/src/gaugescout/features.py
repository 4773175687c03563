"""Scale-space keypoints, gradient-histogram descriptors and correspondence tools.

The detector/descriptor pair follows the classic difference-of-Gaussians
recipe (4 octaves, 3 intervals, 4x4x8 descriptor clipped at 0.2). Every
function here is deterministic except RANSAC, which takes an explicit
``numpy.random.Generator``.
"""
from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .imgcore import ImageTooSmall, as_gray

SIGMA0 = 1.6
INIT_SIGMA = 0.5
N_OCTAVES = 4
N_INTERVALS = 3
CONTRAST_THR = 0.03
EDGE_RATIO = 10.0
ORI_BINS = 36
ORI_SIG_FCTR = 1.5
ORI_RADIUS_FCTR = 3.0
ORI_PEAK_RATIO = 0.8
DESCR_WIDTH = 4
DESCR_BINS = 8
DESCR_SCL_FCTR = 3.0
DESCR_CLIP = 0.2
MIN_SIZE = 16


class InsufficientTrainSet(UserWarning):
    pass


class NoRobustTransform(RuntimeError):
    pass


@dataclass
class KeypointSet:
    xy: np.ndarray                 # (n, 2) image pixels
    scale: np.ndarray              # (n,) sigma in image pixels
    orientation: np.ndarray        # (n,) radians in [0, 2pi)
    response: np.ndarray           # (n,) |DoG| at the refined extremum
    octave: np.ndarray             # (n,) int
    layer: np.ndarray              # (n,) fractional interval index within the octave

    def __len__(self):
        return len(self.scale)

    @classmethod
    def empty(cls) -> "KeypointSet":
        z = np.zeros(0)
        return cls(np.zeros((0, 2)), z, z.copy(), z.copy(), np.zeros(0, np.int64), z.copy())

    def subset(self, idx) -> "KeypointSet":
        return KeypointSet(self.xy[idx], self.scale[idx], self.orientation[idx],
                           self.response[idx], self.octave[idx], self.layer[idx])

    def shifted(self, dx: float, dy: float, factor: float = 1.0) -> "KeypointSet":
        """Keypoints mapped by ``p * factor + (dx, dy)``, e.g. from a resized crop back to its parent."""
        return KeypointSet(self.xy * factor + [dx, dy], self.scale * factor, self.orientation,
                           self.response, self.octave, self.layer)


@dataclass
class DescriptorSet:
    keypoints: KeypointSet
    vectors: np.ndarray            # (n, 128) float32
    dropped: int = 0               # keypoints discarded near the border or as degenerate

    def __len__(self):
        return len(self.vectors)

    @classmethod
    def empty(cls) -> "DescriptorSet":
        return cls(KeypointSet.empty(), np.zeros((0, 128), np.float32))


@dataclass
class MatchSet:
    query_idx: np.ndarray
    train_idx: np.ndarray
    distance: np.ndarray
    query: DescriptorSet | None = field(default=None, repr=False)
    train: DescriptorSet | None = field(default=None, repr=False)
    flag: str | None = None

    def __len__(self):
        return len(self.query_idx)

    def sorted(self) -> "MatchSet":
        o = np.argsort(self.distance, kind="stable")
        return MatchSet(self.query_idx[o], self.train_idx[o], self.distance[o],
                        self.query, self.train, self.flag)

    def subset(self, mask) -> "MatchSet":
        return MatchSet(self.query_idx[mask], self.train_idx[mask], self.distance[mask],
                        self.query, self.train, self.flag)

    def query_points(self) -> np.ndarray:
        return self.query.keypoints.xy[self.query_idx]

    def train_points(self) -> np.ndarray:
        return self.train.keypoints.xy[self.train_idx]


# ---------------------------------------------------------------- scale space

@dataclass
class ScaleSpace:
    gaussians: list       # per octave: (N_INTERVALS + 3, h, w) float32
    dogs: list            # per octave: (N_INTERVALS + 2, h, w) float32


def build_scale_space(img) -> ScaleSpace:
    a = as_gray(img)
    if a.shape[0] < MIN_SIZE or a.shape[1] < MIN_SIZE:
        raise ImageTooSmall(f"keypoint detection needs >= {MIN_SIZE}x{MIN_SIZE}, got {a.shape[1]}x{a.shape[0]}")
    base = a.astype(np.float32) / 255.0
    base = ndimage.gaussian_filter(base, np.sqrt(SIGMA0 ** 2 - INIT_SIGMA ** 2), mode="nearest")
    k = 2.0 ** (1.0 / N_INTERVALS)
    sig = [SIGMA0 * k ** i for i in range(N_INTERVALS + 3)]
    incr = [0.0] + [np.sqrt(sig[i] ** 2 - sig[i - 1] ** 2) for i in range(1, len(sig))]
    gaussians, dogs = [], []
    for o in range(N_OCTAVES):
        if min(base.shape) < 8:
            break
        stack = [base]
        for i in range(1, len(sig)):
            stack.append(ndimage.gaussian_filter(stack[-1], incr[i], mode="nearest"))
        g = np.stack(stack)
        gaussians.append(g)
        dogs.append(g[1:] - g[:-1])
        base = g[N_INTERVALS][::2, ::2]
    return ScaleSpace(gaussians, dogs)


@numba.njit(cache=True)
def _refine(dog, cand, contrast_thr, edge_ratio, border):
    """Sub-pixel/sub-scale refinement of integer extrema ``cand`` (rows of s, y, x)."""
    ns, h, w = dog.shape
    n = cand.shape[0]
    out = np.zeros((n, 5))  # x, y, layer, response, ok
    for i in range(n):
        s, y, x = cand[i, 0], cand[i, 1], cand[i, 2]
        ok = False
        ox = oy = os_ = 0.0
        for _ in range(5):
            dx = (dog[s, y, x + 1] - dog[s, y, x - 1]) * 0.5
            dy = (dog[s, y + 1, x] - dog[s, y - 1, x]) * 0.5
            ds = (dog[s + 1, y, x] - dog[s - 1, y, x]) * 0.5
            v2 = dog[s, y, x] * 2.0
            dxx = dog[s, y, x + 1] + dog[s, y, x - 1] - v2
            dyy = dog[s, y + 1, x] + dog[s, y - 1, x] - v2
            dss = dog[s + 1, y, x] + dog[s - 1, y, x] - v2
            dxy = (dog[s, y + 1, x + 1] - dog[s, y + 1, x - 1] - dog[s, y - 1, x + 1] + dog[s, y - 1, x - 1]) * 0.25
            dxs = (dog[s + 1, y, x + 1] - dog[s + 1, y, x - 1] - dog[s - 1, y, x + 1] + dog[s - 1, y, x - 1]) * 0.25
            dys = (dog[s + 1, y + 1, x] - dog[s + 1, y - 1, x] - dog[s - 1, y + 1, x] + dog[s - 1, y - 1, x]) * 0.25
            H = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
            g = np.array([dx, dy, ds])
            if abs(np.linalg.det(H)) < 1e-12:
                break
            off = -np.linalg.solve(H, g)
            ox, oy, os_ = off[0], off[1], off[2]
            if abs(ox) < 0.5 and abs(oy) < 0.5 and abs(os_) < 0.5:
                ok = True
                break
            x += int(np.round(ox))
            y += int(np.round(oy))
            s += int(np.round(os_))
            if s < 1 or s > ns - 2 or x < border or x >= w - border or y < border or y >= h - border:
                break
        if not ok:
            continue
        dx = (dog[s, y, x + 1] - dog[s, y, x - 1]) * 0.5
        dy = (dog[s, y + 1, x] - dog[s, y - 1, x]) * 0.5
        ds = (dog[s + 1, y, x] - dog[s - 1, y, x]) * 0.5
        val = dog[s, y, x] + 0.5 * (dx * ox + dy * oy + ds * os_)
        if abs(val) < contrast_thr:
            continue
        v2 = dog[s, y, x] * 2.0
        dxx = dog[s, y, x + 1] + dog[s, y, x - 1] - v2
        dyy = dog[s, y + 1, x] + dog[s, y - 1, x] - v2
        dxy = (dog[s, y + 1, x + 1] - dog[s, y + 1, x - 1] - dog[s, y - 1, x + 1] + dog[s, y - 1, x - 1]) * 0.25
        tr = dxx + dyy
        det = dxx * dyy - dxy * dxy
        if det <= 0 or tr * tr * edge_ratio >= (edge_ratio + 1) ** 2 * det:
            continue
        out[i, 0] = x + ox
        out[i, 1] = y + oy
        out[i, 2] = s + os_
        out[i, 3] = abs(val)
        out[i, 4] = 1.0
    return out


@numba.njit(cache=True)
def _orientation_hist(gimg, x, y, sigma):
    h, w = gimg.shape
    nb = 36
    hist = np.zeros(nb)
    radius = int(np.round(3.0 * 1.5 * sigma))
    wsig = -1.0 / (2.0 * (1.5 * sigma) ** 2)
    xi = int(np.round(x))
    yi = int(np.round(y))
    for j in range(-radius, radius + 1):
        yy = yi + j
        if yy <= 0 or yy >= h - 1:
            continue
        for i in range(-radius, radius + 1):
            xx = xi + i
            if xx <= 0 or xx >= w - 1:
                continue
            gx = gimg[yy, xx + 1] - gimg[yy, xx - 1]
            gy = gimg[yy + 1, xx] - gimg[yy - 1, xx]
            mag = np.sqrt(gx * gx + gy * gy)
            ang = np.arctan2(gy, gx)
            if ang < 0:
                ang += 2 * np.pi
            b = int(np.round(ang * nb / (2 * np.pi))) % nb
            hist[b] += np.exp((i * i + j * j) * wsig) * mag
    sm = np.zeros(nb)
    for b in range(nb):
        sm[b] = (hist[(b - 2) % nb] + hist[(b + 2) % nb]) * (1.0 / 16) \
            + (hist[(b - 1) % nb] + hist[(b + 1) % nb]) * (4.0 / 16) + hist[b] * (6.0 / 16)
    return sm


@numba.njit(cache=True)
def _descriptor(gimg, x, y, sigma, angle):
    """Raw 4x4x8 histogram (un-normalised) and a flag for a usable window."""
    h, w = gimg.shape
    d = 4
    n = 8
    hist_width = 3.0 * sigma
    radius = int(np.round(hist_width * 1.4142135623730951 * (d + 1) * 0.5))
    radius = min(radius, int(np.sqrt(float(h * h + w * w))))
    cos_t = np.cos(angle) / hist_width
    sin_t = np.sin(angle) / hist_width
    exp_scale = -1.0 / (d * d * 0.5)
    hist = np.zeros((d + 2, d + 2, n + 2))
    xi = int(np.round(x))
    yi = int(np.round(y))
    for j in range(-radius, radius + 1):
        for i in range(-radius, radius + 1):
            c_rot = i * cos_t - j * sin_t
            r_rot = i * sin_t + j * cos_t
            rbin = r_rot + d / 2 - 0.5
            cbin = c_rot + d / 2 - 0.5
            if rbin <= -1 or rbin >= d or cbin <= -1 or cbin >= d:
                continue
            yy = yi + j
            xx = xi + i
            if yy <= 0 or yy >= h - 1 or xx <= 0 or xx >= w - 1:
                continue
            gx = gimg[yy, xx + 1] - gimg[yy, xx - 1]
            gy = gimg[yy + 1, xx] - gimg[yy - 1, xx]
            mag = np.sqrt(gx * gx + gy * gy) * np.exp((c_rot * c_rot + r_rot * r_rot) * exp_scale)
            ori = np.arctan2(gy, gx) - angle
            while ori < 0:
                ori += 2 * np.pi
            while ori >= 2 * np.pi:
                ori -= 2 * np.pi
            obin = ori * n / (2 * np.pi)
            r0 = int(np.floor(rbin))
            c0 = int(np.floor(cbin))
            o0 = int(np.floor(obin))
            fr = rbin - r0
            fc = cbin - c0
            fo = obin - o0
            for dr in range(2):
                wr = fr if dr else 1 - fr
                for dc in range(2):
                    wc = fc if dc else 1 - fc
                    for do in range(2):
                        wo = fo if do else 1 - fo
                        hist[r0 + 1 + dr, c0 + 1 + dc, (o0 + do) % n] += mag * wr * wc * wo
    out = np.zeros(d * d * n)
    k = 0
    for r in range(d):
        for c in range(d):
            for o in range(n):
                out[k] = hist[r + 1, c + 1, o]
                k += 1
    return out


def _clip_normalize(raw: np.ndarray, clip: float = DESCR_CLIP):
    """L2-normalise, then project onto {||v|| = 1, v_i <= clip}.

    The projection is the fixed point of repeated clip-and-renormalise, solved
    directly by water-filling. Rows that cannot satisfy it (fewer than
    ``1/clip^2`` non-zero bins) or have zero norm are reported invalid.
    """
    v = np.asarray(raw, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    valid = norms[:, 0] > 1e-12
    v = np.where(valid[:, None], v / np.where(norms > 0, norms, 1), 0.0)
    srt = -np.sort(-v, axis=1)
    sq = srt ** 2
    tail = np.cumsum(sq[:, ::-1], axis=1)[:, ::-1]   # tail[k] = sum_{i>=k} sq_i
    out = np.empty_like(v)
    c2 = clip * clip
    for r in range(len(v)):
        if not valid[r]:
            out[r] = 0
            continue
        done = False
        for k in range(v.shape[1]):
            rest = 1.0 - k * c2
            if rest <= 0 or tail[r, k] <= 0:
                break
            alpha = np.sqrt(rest / tail[r, k])
            if alpha * srt[r, k] <= clip:
                out[r] = np.minimum(v[r] * alpha, clip)
                done = True
                break
        if not done:
            valid[r] = False
            out[r] = 0
    return out, valid


# ---------------------------------------------------------------- public API

def detect_keypoints(img, max_count: int = 1000, scale_space: ScaleSpace | None = None) -> KeypointSet:
    ss = scale_space if scale_space is not None else build_scale_space(img)
    rows = []
    border = 5
    for o, dog in enumerate(ss.dogs):
        ns, h, w = dog.shape
        if h <= 2 * border + 2 or w <= 2 * border + 2:
            continue
        mx = ndimage.maximum_filter(dog, size=3, mode="nearest")
        mn = ndimage.minimum_filter(dog, size=3, mode="nearest")
        thr = 0.5 * CONTRAST_THR
        ext = ((dog == mx) & (dog > thr)) | ((dog == mn) & (dog < -thr))
        ext[0] = ext[-1] = False
        ext[:, :border] = ext[:, -border:] = False
        ext[:, :, :border] = ext[:, :, -border:] = False
        cand = np.argwhere(ext).astype(np.int64)
        if len(cand) == 0:
            continue
        ref = _refine(dog.astype(np.float64), cand, CONTRAST_THR, EDGE_RATIO, border)
        ref = ref[ref[:, 4] > 0]
        g = ss.gaussians[o]
        for x, y, layer, resp, _ in ref:
            li = int(np.clip(np.round(layer), 0, g.shape[0] - 1))
            sig_oct = SIGMA0 * 2.0 ** (layer / N_INTERVALS)
            hist = _orientation_hist(g[li], x, y, sig_oct)
            hmax = hist.max()
            if hmax <= 0:
                continue
            for b in range(ORI_BINS):
                l, r = hist[b - 1], hist[(b + 1) % ORI_BINS]
                if hist[b] > l and hist[b] > r and hist[b] >= ORI_PEAK_RATIO * hmax:
                    bin_ = b + 0.5 * (l - r) / (l - 2 * hist[b] + r)
                    ang = (bin_ % ORI_BINS) * 2 * np.pi / ORI_BINS
                    f = 2.0 ** o
                    rows.append((x * f, y * f, sig_oct * f, ang % (2 * np.pi), resp, o, layer))
    if not rows:
        return KeypointSet.empty()
    a = np.array(rows)
    # strongest first; ties resolved by position for determinism
    order = np.lexsort((a[:, 1], a[:, 0], -a[:, 4]))[:max_count]
    a = a[order]
    return KeypointSet(a[:, :2].copy(), a[:, 2].copy(), a[:, 3].copy(), a[:, 4].copy(),
                       a[:, 5].astype(np.int64), a[:, 6].copy())


def compute_descriptors(img, kps: KeypointSet, scale_space: ScaleSpace | None = None) -> DescriptorSet:
    if len(kps) == 0:
        return DescriptorSet.empty()
    ss = scale_space if scale_space is not None else build_scale_space(img)
    raw = np.zeros((len(kps), 128))
    usable = np.zeros(len(kps), bool)
    for i in range(len(kps)):
        o = int(kps.octave[i])
        f = 2.0 ** o
        g = ss.gaussians[o]
        li = int(np.clip(np.round(kps.layer[i]), 0, g.shape[0] - 1))
        x, y = kps.xy[i] / f
        sig = kps.scale[i] / f
        h, w = g.shape[1:]
        hw = DESCR_SCL_FCTR * sig
        if x < hw or y < hw or x > w - 1 - hw or y > h - 1 - hw:
            continue
        raw[i] = _descriptor(g[li], x, y, sig, kps.orientation[i])
        usable[i] = True
    vec, valid = _clip_normalize(raw)
    keep = usable & valid
    idx = np.flatnonzero(keep)
    return DescriptorSet(kps.subset(idx), vec[idx].astype(np.float32), int(len(kps) - len(idx)))


def extract(img, max_count: int = 1000) -> DescriptorSet:
    """Detect and describe in one pass over a shared scale space."""
    ss = build_scale_space(img)
    return compute_descriptors(img, detect_keypoints(img, max_count, ss), ss)


def _pair_dist(q, t):
    """Euclidean distance of matching rows, the reference per-pair arithmetic."""
    return np.sqrt(np.sum((q - t) ** 2, axis=-1))


def _match_block(q, t, tsq, ratio):
    # GEMM shortlist, then exact distances on every candidate that could be in the top two
    approx = np.sum(q ** 2, axis=1)[:, None] + tsq[None, :] - 2.0 * (q @ t.T)
    part = np.partition(approx, 1, axis=1)[:, 1]
    cand_r, cand_c = np.nonzero(approx <= part[:, None] + 1e-9)
    d = np.full(approx.shape, np.inf)
    d[cand_r, cand_c] = _pair_dist(q[cand_r], t[cand_c])
    j1 = np.argmin(d, axis=1)
    rows = np.arange(len(q))
    d1 = d[rows, j1]
    d[rows, j1] = np.inf
    d2 = d.min(axis=1)
    keep = d1 < ratio * d2
    return rows[keep], j1[keep], d1[keep]


def match_ratio_bruteforce(q: DescriptorSet, t: DescriptorSet, ratio: float = 0.75) -> MatchSet:
    """Reference double loop over every (query, train) pair."""
    e = np.zeros(0, np.int64)
    if len(t) < 2 or len(q) == 0:
        return MatchSet(e, e.copy(), np.zeros(0), q, t,
                        "InsufficientTrainSet" if len(t) < 2 else None)
    qv = np.asarray(q.vectors, dtype=np.float64)
    tv = np.asarray(t.vectors, dtype=np.float64)
    qi, ti, dist = [], [], []
    for i in range(len(qv)):
        best = second = np.inf
        bj = -1
        for j in range(len(tv)):
            d = _pair_dist(qv[i], tv[j])
            if d < best:
                best, second, bj = d, best, j
            elif d < second:
                second = d
        if best < ratio * second:
            qi.append(i)
            ti.append(bj)
            dist.append(best)
    return MatchSet(np.array(qi, np.int64), np.array(ti, np.int64), np.array(dist, np.float64), q, t)


def match_ratio(q: DescriptorSet, t: DescriptorSet, ratio: float = 0.75,
                block: int = 256, workers: int = 1) -> MatchSet:
    """Nearest/second-nearest ratio test with exhaustive semantics.

    Same result as :func:`match_ratio_bruteforce` for any ``block`` or
    ``workers``: a matrix-product shortlist only decides which pairs get the
    exact distance computation.
    """
    if not 0 < ratio < 1:
        raise ValueError("ratio must be in (0, 1)")
    if len(t) < 2 or len(q) == 0:
        e = np.zeros(0, np.int64)
        return MatchSet(e, e.copy(), np.zeros(0), q, t,
                        "InsufficientTrainSet" if len(t) < 2 else None)
    qv = np.asarray(q.vectors, dtype=np.float64)
    tv = np.asarray(t.vectors, dtype=np.float64)
    tsq = np.sum(tv ** 2, axis=1)
    starts = range(0, len(qv), block)

    def run(s):
        r, j, d = _match_block(qv[s:s + block], tv, tsq, ratio)
        return r + s, j, d

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    qi = np.concatenate([p[0] for p in parts]).astype(np.int64)
    ti = np.concatenate([p[1] for p in parts]).astype(np.int64)
    dist = np.concatenate([p[2] for p in parts])
    return MatchSet(qi, ti, dist, q, t)


def concentration_score(points, expected_radius: float, radius_factor: float = 1.5):
    """Fraction of matched points within ``radius_factor * expected_radius`` of their centroid.

    Returns ``(score, centroid)``; ``centroid`` is None when there are no points.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(p) == 0:
        return 0.0, None
    c = p.mean(axis=0)
    d = np.hypot(p[:, 0] - c[0], p[:, 1] - c[1])
    return float(np.mean(d <= radius_factor * expected_radius)), (float(c[0]), float(c[1]))


# ---------------------------------------------------------------- descriptor blobs

BLOB_MAGIC = b"GSD1"


def descriptors_to_bytes(vectors) -> bytes:
    """Little-endian blob: magic, uint32 count, then count x 128 float32."""
    v = np.ascontiguousarray(vectors, dtype="<f4").reshape(-1, 128)
    return BLOB_MAGIC + struct.pack("<I", len(v)) + v.tobytes()


def descriptors_from_bytes(blob: bytes) -> np.ndarray:
    if blob[:4] != BLOB_MAGIC:
        raise ValueError("not a descriptor blob")
    (n,) = struct.unpack("<I", blob[4:8])
    body = blob[8:]
    if len(body) != n * 128 * 4:
        raise ValueError(f"blob length mismatch: {n} records declared, {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(n, 128).astype(np.float32)


# ---------------------------------------------------------------- robust fitting

def _fit_similarity(src, dst):
    """Least-squares ``[a -b tx; b a ty]`` for one or many point sets.

    ``src``/``dst`` are ``(..., n, 2)``; returns ``(..., 3, 3)``.
    """
    ms = src.mean(axis=-2, keepdims=True)
    md = dst.mean(axis=-2, keepdims=True)
    s = src - ms
    d = dst - md
    den = np.sum(s ** 2, axis=(-1, -2))
    a = np.sum(s[..., 0] * d[..., 0] + s[..., 1] * d[..., 1], axis=-1)
    b = np.sum(s[..., 0] * d[..., 1] - s[..., 1] * d[..., 0], axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = a / den
        b = b / den
    tx = md[..., 0, 0] - (a * ms[..., 0, 0] - b * ms[..., 0, 1])
    ty = md[..., 0, 1] - (b * ms[..., 0, 0] + a * ms[..., 0, 1])
    H = np.zeros(a.shape + (3, 3))
    H[..., 0, 0] = a
    H[..., 0, 1] = -b
    H[..., 0, 2] = tx
    H[..., 1, 0] = b
    H[..., 1, 1] = a
    H[..., 1, 2] = ty
    H[..., 2, 2] = 1.0
    return H


def _normalizer(p):
    c = p.mean(axis=-2, keepdims=True)
    d = np.sqrt(np.sum((p - c) ** 2, axis=-1)).mean(axis=-1) + 1e-12
    s = np.sqrt(2) / d
    T = np.zeros(s.shape + (3, 3))
    T[..., 0, 0] = s
    T[..., 1, 1] = s
    T[..., 0, 2] = -s * c[..., 0, 0]
    T[..., 1, 2] = -s * c[..., 0, 1]
    T[..., 2, 2] = 1
    return T


def _fit_homography(src, dst):
    """Normalised DLT, batched over leading axes."""
    Ts = _normalizer(src)
    Td = _normalizer(dst)
    ps = src @ np.swapaxes(Ts[..., :2, :2], -1, -2) + Ts[..., None, :2, 2]
    pd = dst @ np.swapaxes(Td[..., :2, :2], -1, -2) + Td[..., None, :2, 2]
    x, y = ps[..., 0], ps[..., 1]
    u, v = pd[..., 0], pd[..., 1]
    one = np.ones_like(x)
    zero = np.zeros_like(x)
    r1 = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y, -u], axis=-1)
    r2 = np.stack([zero, zero, zero, x, y, one, -v * x, -v * y, -v], axis=-1)
    A = np.concatenate([r1, r2], axis=-2)
    _, _, vt = np.linalg.svd(A)
    Hn = vt[..., -1, :].reshape(vt.shape[:-2] + (3, 3))
    H = np.linalg.inv(Td) @ Hn @ Ts
    return H


def _project_many(H, p):
    """Project points ``p (n,2)`` through each of ``H (m,3,3)`` -> ``(m, n, 2)``."""
    q = np.einsum("mij,nj->mni", H[..., :, :2], p) + H[:, None, :, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        return q[..., :2] / q[..., 2:3]


def estimate_transform_ransac(src, dst=None, model: str = "homography", inlier_px: float = 3.0,
                              iterations: int = 1000, min_inliers: int = 8,
                              rng: np.random.Generator | None = None):
    """Fit ``dst ~ H src`` robustly; returns ``(H, inlier_mask)``.

    ``src`` may be a :class:`MatchSet`, in which case query points map to train points.

    Raises :class:`NoRobustTransform` when the best consensus set is smaller
    than ``min_inliers``.
    """
    if isinstance(src, MatchSet):
        src, dst = src.query_points(), src.train_points()
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if model not in ("similarity", "homography"):
        raise ValueError(f"unknown model {model!r}")
    k = 2 if model == "similarity" else 4
    n = len(src)
    if n < k or n < min_inliers:
        raise NoRobustTransform(f"{n} matches, need {max(k, min_inliers)}")
    rng = rng if rng is not None else np.random.default_rng(0)
    samples = np.argsort(rng.random((iterations, n)), axis=1)[:, :k]
    fit = _fit_similarity if model == "similarity" else _fit_homography
    with np.errstate(all="ignore"):
        Hs = fit(src[samples], dst[samples])
        err = np.linalg.norm(_project_many(Hs, src) - dst, axis=2)
    err = np.where(np.isfinite(err), err, np.inf)
    inl = err < inlier_px
    counts = inl.sum(axis=1)
    # prefer more inliers, then lower residual among them
    resid = np.where(inl, err, 0).sum(axis=1)
    best = np.lexsort((resid, -counts))[0]
    mask = inl[best]
    if mask.sum() < min_inliers:
        raise NoRobustTransform(f"best consensus {int(mask.sum())} < {min_inliers}")
    H = Hs[best]
    for _ in range(3):
        with np.errstate(all="ignore"):
            H_new = fit(src[mask][None], dst[mask][None])[0]
            e = np.linalg.norm(_project_many(H_new[None], src)[0] - dst, axis=1)
        if not np.all(np.isfinite(H_new)):
            break
        new_mask = np.isfinite(e) & (e < inlier_px)
        if new_mask.sum() < min_inliers:
            break
        H = H_new
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    if mask.sum() < min_inliers:
        raise NoRobustTransform(f"refit consensus {int(mask.sum())} < {min_inliers}")
    return H / H[2, 2], mask
