"""Image containers, colour conversion, pyramids and sub-pixel sampling.

Coordinates follow the pixel-centre convention: pixel ``(row, col)`` sits at
``x = col, y = row``.  All sampling helpers are vectorised and return a value
array together with a boolean validity array instead of raising, because
invalid lookups are routine during warping.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from ._atomic import atomic_write_bytes
from .errors import DegenerateInputError

# Full-range BT.601, rows produce (Y, Cb, Cr) from (R, G, B).
RGB_TO_YCBCR = np.array(
    [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ]
)
YCBCR_OFFSET = np.array([0.0, 0.5, 0.5])
YCBCR_TO_RGB = np.linalg.inv(RGB_TO_YCBCR)

PYRAMID_SIGMA = 1.0
# Blur support radius in pixels; the mask is eroded by the same radius.
PYRAMID_RADIUS = 2

_SNAP_EPS = 1e-9


@dataclass
class MultiChannelImage:
    """Float raster of shape (height, width, channels) plus a validity mask."""

    data: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError(f"expected 1 or 3 channels, got shape {data.shape}")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != data.shape[:2]:
            raise ValueError(f"mask shape {mask.shape} does not match data {data.shape[:2]}")
        self.data = data
        self.mask = mask

    @classmethod
    def full(cls, data) -> "MultiChannelImage":
        data = np.asarray(data, dtype=np.float64)
        return cls(data, np.ones(data.shape[:2], dtype=bool))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def channel(self, i: int) -> np.ndarray:
        return self.data[:, :, i]

    def copy(self) -> "MultiChannelImage":
        return MultiChannelImage(self.data.copy(), self.mask.copy())


def to_ycbcr(img: MultiChannelImage) -> MultiChannelImage:
    if img.channels != 3:
        raise ValueError("to_ycbcr needs a 3-channel RGB image")
    out = img.data @ RGB_TO_YCBCR.T + YCBCR_OFFSET
    return MultiChannelImage(out, img.mask.copy())


def from_ycbcr(img: MultiChannelImage) -> MultiChannelImage:
    if img.channels != 3:
        raise ValueError("from_ycbcr needs a 3-channel YCbCr image")
    out = (img.data - YCBCR_OFFSET) @ YCBCR_TO_RGB.T
    return MultiChannelImage(out, img.mask.copy())


def luma(img: MultiChannelImage) -> np.ndarray:
    """Y plane of an RGB image; single-channel images are returned as is."""
    if img.channels == 1:
        return img.data[:, :, 0]
    return img.data @ RGB_TO_YCBCR[0]


def build_pyramid(img: MultiChannelImage, levels: int) -> list[MultiChannelImage]:
    if levels < 1:
        raise ValueError("levels must be >= 1")
    need = 2 ** (levels - 1)
    if img.width < need or img.height < need:
        raise DegenerateInputError(
            f"{img.width}x{img.height} image too small for {levels} pyramid levels"
        )
    pyramid = [img]
    truncate = PYRAMID_RADIUS / PYRAMID_SIGMA
    window = 2 * PYRAMID_RADIUS + 1
    for _ in range(levels - 1):
        prev = pyramid[-1]
        h, w = prev.height // 2, prev.width // 2
        blurred = ndimage.gaussian_filter(
            prev.data, sigma=(PYRAMID_SIGMA, PYRAMID_SIGMA, 0), mode="nearest", truncate=truncate
        )
        eroded = ndimage.minimum_filter(prev.mask, size=window, mode="nearest")
        pyramid.append(MultiChannelImage(blurred[:2 * h:2, :2 * w:2], eroded[:2 * h:2, :2 * w:2]))
    return pyramid


def _snap(v):
    v = np.asarray(v, dtype=np.float64)
    r = np.round(v)
    return np.where(np.abs(v - r) < _SNAP_EPS, r, v)


def bilinear_sample(plane, mask, x, y):
    """Bilinearly sample ``plane`` at points ``(x, y)``.

    ``plane`` is (H, W) or (H, W, C).  Returns ``(values, valid)`` where a
    point is valid when every neighbour carrying non-zero weight is inside the
    raster and unmasked.  Invalid points get value 0.
    """
    plane = np.asarray(plane)
    x = _snap(x)
    y = _snap(y)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    y = np.atleast_1d(y)
    h, w = plane.shape[:2]

    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    valid = np.isfinite(x) & np.isfinite(y)
    values = 0.0
    corners = (
        (x0, y0, (1 - fx) * (1 - fy)),
        (x0 + 1, y0, fx * (1 - fy)),
        (x0, y0 + 1, (1 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    )
    for xi, yi, wk in corners:
        inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        xc = np.clip(xi, 0, w - 1)
        yc = np.clip(yi, 0, h - 1)
        ok = inside & mask[yc, xc]
        valid &= ok | (wk == 0)
        px = plane[yc, xc]
        wk = np.where(ok, wk, 0.0)
        values = values + (wk[:, None] * px if px.ndim == 2 else wk * px)
    values = np.where(valid[:, None] if np.ndim(values) == 2 else valid, values, 0.0)
    if scalar:
        return values[0], bool(valid[0])
    return values, valid


def gradient_at(plane, mask, x, y):
    """Central differences of bilinear samples one pixel either side.

    Returns ``(gx, gy, valid)``; the centre and all four neighbours must be
    valid.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    right, v1 = bilinear_sample(plane, mask, x + 1.0, y)
    left, v2 = bilinear_sample(plane, mask, x - 1.0, y)
    down, v3 = bilinear_sample(plane, mask, x, y + 1.0)
    up, v4 = bilinear_sample(plane, mask, x, y - 1.0)
    _, v0 = bilinear_sample(plane, mask, x, y)
    gx = (right - left) / 2.0
    gy = (down - up) / 2.0
    valid = np.logical_and.reduce([v0, v1, v2, v3, v4])
    if np.ndim(valid) == 0:
        valid = bool(valid)
    return gx, gy, valid


def sample_overlap_points(mask_s, mask_t, interval: int = 3) -> np.ndarray:
    """Regular grid points (x, y) valid in both masks with a computable gradient.

    The stride starts at (0, 0).  Output is sorted row-major, shape (N, 2).
    """
    mask_s = np.asarray(mask_s, dtype=bool)
    mask_t = np.asarray(mask_t, dtype=bool)
    if mask_s.shape != mask_t.shape:
        raise ValueError("masks must share dimensions")
    if interval < 1:
        raise ValueError("interval must be >= 1")
    h, w = mask_s.shape
    ys, xs = np.mgrid[0:h:interval, 0:w:interval]
    xs = xs.ravel()
    ys = ys.ravel()
    keep = mask_s[ys, xs] & mask_t[ys, xs]
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nx, ny = xs + dx, ys + dy
        inside = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
        keep &= inside & mask_t[np.clip(ny, 0, h - 1), np.clip(nx, 0, w - 1)]
    return np.column_stack([xs[keep], ys[keep]]).astype(np.float64)


def load_image(path) -> MultiChannelImage:
    """Read an 8/16-bit PNG or binary PPM as RGB (or grey) in [0, 1].

    An alpha channel, when present, becomes the validity mask.
    """
    if not Path(path).is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FileNotFoundError(f"cannot read image {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise DegenerateInputError(f"unsupported bit depth {raw.dtype} in {path}")
    data = raw.astype(np.float64) / scale
    mask = None
    if data.ndim == 3:
        if data.shape[2] == 4:
            mask = data[:, :, 3] > 0
            data = data[:, :, 2::-1]
        elif data.shape[2] == 3:
            data = data[:, :, ::-1]
        else:
            data = data[:, :, :1]
    if mask is None:
        mask = np.ones(data.shape[:2], dtype=bool)
    return MultiChannelImage(np.ascontiguousarray(data), mask)


def encode_png(img: MultiChannelImage, bit_depth: int = 8, alpha: bool | None = None) -> bytes:
    if bit_depth == 8:
        maxv, dtype = 255.0, np.uint8
    elif bit_depth == 16:
        maxv, dtype = 65535.0, np.uint16
    else:
        raise ValueError("bit_depth must be 8 or 16")
    if alpha is None:
        alpha = not bool(img.mask.all())
    data = np.clip(img.data, 0.0, 1.0)
    data = np.where(img.mask[:, :, None], data, 0.0)
    q = np.round(data * maxv).astype(dtype)
    if img.channels == 3:
        q = q[:, :, ::-1]
    if alpha:
        a = (img.mask * maxv).astype(dtype)[:, :, None]
        if img.channels == 1:
            q = np.concatenate([q, q, q], axis=2)
        q = np.concatenate([q, a], axis=2)
    elif img.channels == 1:
        q = q[:, :, 0]
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(q))
    if not ok:
        raise RuntimeError("PNG encoding failed")
    return buf.tobytes()


def save_image(path, img: MultiChannelImage, bit_depth: int = 8, alpha: bool | None = None) -> None:
    atomic_write_bytes(Path(path), encode_png(img, bit_depth=bit_depth, alpha=alpha))
