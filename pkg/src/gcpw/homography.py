"""Global homography estimation and rough alignment onto a shared canvas."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, SchemaError
from .imaging import MultiChannelImage, bilinear_sample

logger = logging.getLogger(__name__)

RANSAC_THRESHOLD = 3.0
RANSAC_ITERATIONS = 2000
RANSAC_SEED = 20190902

# Canvas area allowed relative to the two inputs before the warp is
# considered degenerate.
MAX_CANVAS_RATIO = 16.0


@dataclass
class Homography:
    matrix: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        if abs(H[2, 2]) > 1e-12:
            H = H / H[2, 2]
        if not np.all(np.isfinite(H)) or abs(np.linalg.det(H)) < 1e-12 or np.linalg.cond(H) > 1e15:
            raise DegenerateInputError("homography is singular")
        self.matrix = H

    def apply(self, points) -> np.ndarray:
        return apply_h(self.matrix, points)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def to_list(self) -> list[float]:
        return self.matrix.ravel().tolist()

    @classmethod
    def from_list(cls, values) -> "Homography":
        values = list(values)
        if len(values) != 9:
            raise SchemaError("homography must be 9 numbers in row-major order")
        return cls(np.asarray(values, dtype=np.float64))

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))


def apply_h(H, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ np.asarray(H).T
    return hom[:, :2] / hom[:, 2:3]


def _normalizer(pts):
    """Similarity moving the centroid to 0 with RMS distance sqrt(2)."""
    mean = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - mean) ** 2, axis=1)))
    if rms < 1e-12:
        raise DegenerateInputError("all points coincide")
    s = np.sqrt(2.0) / rms
    return np.array([[s, 0, -s * mean[0]], [0, s, -s * mean[1]], [0, 0, 1.0]])


def estimate_dlt(src, dst) -> Homography:
    """Normalised DLT for ``dst ~ H src`` from at least four pairs."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("point lists differ in length")
    if len(src) < 4:
        raise DegenerateInputError("DLT needs at least 4 point pairs")
    T1, T2 = _normalizer(src), _normalizer(dst)
    a = apply_h(T1, src)
    b = apply_h(T2, dst)
    k = len(a)
    A = np.zeros((2 * k, 9))
    x, y = a[:, 0], a[:, 1]
    u, v = b[:, 0], b[:, 1]
    A[0::2, 0:3] = np.column_stack([-x, -y, -np.ones(k)])
    A[0::2, 6:9] = np.column_stack([u * x, u * y, u])
    A[1::2, 3:6] = np.column_stack([-x, -y, -np.ones(k)])
    A[1::2, 6:9] = np.column_stack([v * x, v * y, v])
    _, s, vt = np.linalg.svd(A)
    # a second (near) null direction means the configuration is degenerate
    if s[7] < 1e-8 * s[0]:
        raise DegenerateInputError("degenerate point configuration for DLT")
    Hn = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(T2) @ Hn @ T1)


def transfer_errors(H: Homography, src, dst) -> np.ndarray:
    """Per-match symmetric transfer error, RMS of the two directions."""
    fwd = np.sum((H.apply(src) - dst) ** 2, axis=1)
    bwd = np.sum((H.inverse().apply(dst) - src) ** 2, axis=1)
    return np.sqrt(0.5 * (fwd + bwd))


def estimate_ransac(src, dst, threshold: float = RANSAC_THRESHOLD,
                    iterations: int = RANSAC_ITERATIONS, seed: int = RANSAC_SEED):
    """4-point RANSAC followed by a DLT refit on the inliers.

    Returns ``(homography, inlier_indices)``; deterministic for a given seed.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    k = len(src)
    if k < 4:
        raise DegenerateInputError("RANSAC needs at least 4 matches")
    rng = np.random.default_rng(seed)
    best = None
    best_key = (-1, np.inf)
    needed = iterations
    trial = 0
    while trial < min(iterations, needed):
        trial += 1
        idx = rng.choice(k, size=4, replace=False)
        try:
            H = estimate_dlt(src[idx], dst[idx])
            err = transfer_errors(H, src, dst)
        except (DegenerateInputError, np.linalg.LinAlgError):
            continue
        if not np.all(np.isfinite(err)):
            err = np.where(np.isfinite(err), err, np.inf)
        inl = err < threshold
        key = (int(inl.sum()), float(np.sum(np.minimum(err, threshold))))
        if key[0] > best_key[0] or (key[0] == best_key[0] and key[1] < best_key[1]):
            best_key, best = key, inl
            ratio = key[0] / k
            if ratio >= 1.0:
                break
            if ratio > 0:
                needed = int(np.ceil(np.log(1e-3) / np.log(1.0 - ratio ** 4)))
    if best is None or best_key[0] < 4:
        raise DegenerateInputError("RANSAC found fewer than 4 inliers")
    H = estimate_dlt(src[best], dst[best])
    inliers = np.flatnonzero(transfer_errors(H, src, dst) < threshold)
    if len(inliers) < 4:
        raise DegenerateInputError("RANSAC refit kept fewer than 4 inliers")
    return H, inliers


@dataclass
class RoughAlignment:
    source: MultiChannelImage  # I_s: first image warped onto the canvas
    target: MultiChannelImage  # I_t: second image placed on the canvas
    offset: np.ndarray  # canvas coordinates = I2 coordinates + offset
    homography: Homography  # I1 coordinates -> I2 coordinates

    @property
    def to_canvas(self) -> np.ndarray:
        """Matrix taking I1 coordinates to canvas coordinates."""
        T = np.array([[1, 0, self.offset[0]], [0, 1, self.offset[1]], [0, 0, 1.0]])
        return T @ self.homography.matrix

    def source_to_canvas(self, points) -> np.ndarray:
        return apply_h(self.to_canvas, points)

    def target_to_canvas(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64).reshape(-1, 2) + self.offset

    @property
    def overlap_pixels(self) -> int:
        return int(np.count_nonzero(self.source.mask & self.target.mask))


def _snap_int(v, eps=1e-6):
    r = np.round(v)
    return np.where(np.abs(v - r) < eps, r, v)


def _corners(w, h):
    return np.array([[0, 0], [w - 1, 0], [0, h - 1], [w - 1, h - 1]], dtype=np.float64)


def warp_homography(img: MultiChannelImage, M, canvas: tuple[int, int]) -> MultiChannelImage:
    """Backward-map ``img`` through the 3x3 matrix ``M`` onto a canvas (h, w)."""
    h, w = canvas
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    Minv = np.linalg.inv(M)
    hom = np.stack([xs.ravel(), ys.ravel(), np.ones(h * w)], axis=1) @ Minv.T
    z = hom[:, 2]
    front = z > 1e-12
    z = np.where(front, z, 1.0)
    sx, sy = hom[:, 0] / z, hom[:, 1] / z
    values, valid = bilinear_sample(img.data, img.mask, sx, sy)
    valid &= front
    valid = valid.reshape(h, w)
    data = np.where(valid[:, :, None], values.reshape(h, w, img.channels), 0.0)
    return MultiChannelImage(data, valid)


def rough_align(I1: MultiChannelImage, I2: MultiChannelImage, H: Homography) -> RoughAlignment:
    c1 = _corners(I1.width, I1.height)
    hom = np.column_stack([c1, np.ones(4)]) @ H.matrix.T
    if np.any(hom[:, 2] <= 1e-12):
        raise DegenerateInputError("homography sends image corners behind the camera")
    mapped = _snap_int(hom[:, :2] / hom[:, 2:3])
    pts = np.vstack([mapped, _corners(I2.width, I2.height)])
    lo = np.floor(pts.min(axis=0))
    hi = np.ceil(pts.max(axis=0))
    cw, ch = int(hi[0] - lo[0]) + 1, int(hi[1] - lo[1]) + 1
    limit = MAX_CANVAS_RATIO * (I1.width * I1.height + I2.width * I2.height)
    if cw * ch > limit:
        raise DegenerateInputError(f"degenerate canvas {cw}x{ch}")
    offset = -lo
    T = np.array([[1, 0, offset[0]], [0, 1, offset[1]], [0, 0, 1.0]])
    source = warp_homography(I1, T @ H.matrix, (ch, cw))

    tdata = np.zeros((ch, cw, I2.channels))
    tmask = np.zeros((ch, cw), dtype=bool)
    ox, oy = int(offset[0]), int(offset[1])
    tdata[oy:oy + I2.height, ox:ox + I2.width] = I2.data
    tmask[oy:oy + I2.height, ox:ox + I2.width] = I2.mask
    result = RoughAlignment(source, MultiChannelImage(tdata, tmask), offset, H)
    if result.overlap_pixels == 0:
        logger.warning("rough alignment produced an empty overlap; photometric term will be empty")
    return result
