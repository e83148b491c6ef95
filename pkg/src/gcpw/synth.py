"""Synthetic pairs with controlled colour variation and known local warps.

A pair is cut from one base image.  ``I2`` is a crop; ``I1`` samples the base
through a smooth field (a global homography plus a sinusoidal displacement)
and is then colour-degraded.  The field maps I1 pixel coordinates to I2 pixel
coordinates, so every ground-truth quantity is analytic.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError
from .homography import apply_h
from .imaging import MultiChannelImage, bilinear_sample, save_image
from .io_formats import CorrespondenceSet, dump_json

GAIN_STEP = 0.04
BIAS_STEP = 0.015
GAMMA_STEP = 0.03
MAX_DEGREE = 16


@dataclass
class ColorDegradation:
    degree: int
    gains: np.ndarray
    biases: np.ndarray
    gammas: np.ndarray
    seed: int = 0

    @classmethod
    def identity(cls) -> "ColorDegradation":
        return cls(0, np.ones(3), np.zeros(3), np.ones(3), 0)

    @classmethod
    def from_degree(cls, degree: int, seed: int = 0) -> "ColorDegradation":
        """Per-channel parameters scaled linearly by ``degree``.

        The random directions and fractions depend on ``seed`` only, so one
        seed gives a family whose magnitudes grow monotonically with degree.
        The bias always moves against the gain.
        """
        if degree < 0:
            raise ValueError("degree must be >= 0")
        rng = np.random.default_rng(seed)
        signs = rng.choice([-1.0, 1.0], size=(3, 3))
        # bias opposes the gain change so mid-grey stays in range; independent
        # signs clip most of a mid-grey image at high degrees
        signs[1] = -signs[0]
        fracs = rng.uniform(0.5, 1.0, size=(3, 3))
        steps = np.array([GAIN_STEP, BIAS_STEP, GAMMA_STEP])[:, None]
        delta = signs * fracs * steps * degree
        return cls(degree, 1.0 + delta[0], delta[1], 1.0 + delta[2], seed)

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in asdict(self).items()}


def apply_degradation(img: MultiChannelImage, d: ColorDegradation) -> MultiChannelImage:
    x = np.clip(img.data, 0.0, 1.0)
    out = np.clip(d.gains * np.power(x, d.gammas) + d.biases, 0.0, 1.0)
    return MultiChannelImage(out, img.mask.copy())


@dataclass
class WarpField:
    """Maps I1 pixel coordinates to I2 pixel coordinates."""

    homography: np.ndarray = field(default_factory=lambda: np.eye(3))
    amplitude: float = 0.0
    period: float = 64.0
    phase_x: float = 0.0
    phase_y: float = 0.0

    def __post_init__(self):
        self.homography = np.asarray(self.homography, dtype=np.float64).reshape(3, 3)
        if self.period <= 0:
            raise ValueError("period must be positive")

    @classmethod
    def translation(cls, tx: float, ty: float, **kw) -> "WarpField":
        return cls(np.array([[1, 0, tx], [0, 1, ty], [0, 0, 1.0]]), **kw)

    def local_displacement(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        kx = 2 * np.pi * p[:, 0] / self.period
        ky = 2 * np.pi * p[:, 1] / self.period
        dx = self.amplitude * np.sin(kx + self.phase_x) * np.cos(ky)
        dy = self.amplitude * np.cos(kx) * np.sin(ky + self.phase_y)
        return np.column_stack([dx, dy])

    def map(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return apply_h(self.homography, p) + self.local_displacement(p)

    def offsets(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return self.map(p) - p

    def to_dict(self) -> dict:
        return {
            "homography": self.homography.ravel().tolist(),
            "amplitude": self.amplitude,
            "period": self.period,
            "phase_x": self.phase_x,
            "phase_y": self.phase_y,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WarpField":
        d = dict(d)
        if "homography" in d:
            d["homography"] = np.asarray(d["homography"], dtype=np.float64).reshape(3, 3)
        return cls(**d)


@dataclass
class SyntheticPair:
    i1: MultiChannelImage  # warped and colour-degraded
    i1_clean: MultiChannelImage  # warped only
    i2: MultiChannelImage
    correspondences: CorrespondenceSet
    field: WarpField
    degradation: ColorDegradation
    origin: tuple[int, int]
    truth: dict


def make_base(width: int = 480, height: int = 320, seed: int = 0) -> MultiChannelImage:
    """Deterministic textured RGB image: multi-scale noise plus hard-edged shapes."""
    rng = np.random.default_rng(seed)
    lum = np.zeros((height, width))
    for sigma, amp in ((12.0, 1.0), (5.0, 0.7), (2.0, 0.5), (1.0, 0.25)):
        n = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma, mode="wrap")
        lum += amp * n / n.std()
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(24):
        cx, cy = rng.uniform(0, width), rng.uniform(0, height)
        r = rng.uniform(6, 30)
        level = rng.uniform(-1.2, 1.2)
        if rng.random() < 0.5:
            inside = (xx - cx) ** 2 + (yy - cy) ** 2 < r * r
        else:
            inside = (np.abs(xx - cx) < r) & (np.abs(yy - cy) < 0.6 * r)
        lum = np.where(inside, lum * 0.3 + level, lum)
    lum = ndimage.gaussian_filter(lum, 0.7)
    lum = 0.5 + 0.17 * (lum - lum.mean()) / lum.std()
    chroma = []
    for _ in range(3):
        c = ndimage.gaussian_filter(rng.standard_normal((height, width)), 20.0, mode="wrap")
        chroma.append(0.08 * c / c.std())
    rgb = np.stack([lum + chroma[0], lum + chroma[1], lum + chroma[2]], axis=2)
    return MultiChannelImage.full(np.clip(rgb, 0.05, 0.95))


def _render_view(base: MultiChannelImage, field: WarpField, size, origin) -> MultiChannelImage:
    w, h = size
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    src = field.map(pts) + np.asarray(origin, dtype=np.float64)
    if (src[:, 0].min() < 0 or src[:, 1].min() < 0 or src[:, 0].max() > base.width - 1
            or src[:, 1].max() > base.height - 1):
        raise DegenerateInputError("warp pushes content outside the base image")
    values, valid = bilinear_sample(base.data, base.mask, src[:, 0], src[:, 1])
    return MultiChannelImage(values.reshape(h, w, base.channels), valid.reshape(h, w))


def truth_grid(field: WarpField, size, step: int = 16) -> dict:
    w, h = size
    ys, xs = np.mgrid[0:h:step, 0:w:step]
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    return {"step": step, "points": pts.tolist(), "offsets": field.offsets(pts).tolist()}


def sample_correspondences(field: WarpField, size, rng, n_points: int = 16, n_lines: int = 4,
                           noise: float = 0.5, margin: float = 8.0) -> CorrespondenceSet:
    """Sparse matches from the true field, restricted to the visible overlap."""
    w, h = size
    ys, xs = np.mgrid[margin:h - margin:4, margin:w - margin:4]
    cand = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    mapped = field.map(cand)
    inside = ((mapped[:, 0] >= margin) & (mapped[:, 0] <= w - 1 - margin)
              & (mapped[:, 1] >= margin) & (mapped[:, 1] <= h - 1 - margin))
    cand, mapped = cand[inside], mapped[inside]
    if len(cand) < max(n_points, 4):
        raise DegenerateInputError("overlap too small to place correspondences")
    pick = np.sort(rng.choice(len(cand), size=n_points, replace=False))
    p1 = cand[pick]
    p2 = mapped[pick] + rng.normal(0.0, noise, size=(n_points, 2)) if noise > 0 else mapped[pick]
    lines = []
    tries = 0
    while len(lines) < n_lines and tries < 100 * max(n_lines, 1):
        tries += 1
        a = cand[rng.integers(len(cand))]
        ang = rng.uniform(0, np.pi)
        length = rng.uniform(30.0, 80.0)
        b = a + length * np.array([np.cos(ang), np.sin(ang)])
        seg = np.array([a, b])
        m = field.map(seg)
        if (b[0] < margin or b[0] > w - 1 - margin or b[1] < margin or b[1] > h - 1 - margin
                or m[:, 0].min() < margin or m[:, 0].max() > w - 1 - margin
                or m[:, 1].min() < margin or m[:, 1].max() > h - 1 - margin):
            continue
        lines.append([seg, m])
    pts = np.column_stack([p1, p2])
    return CorrespondenceSet(pts, np.array(lines).reshape(-1, 2, 2, 2), "input")


def make_pair(base: MultiChannelImage, field: WarpField, degree: int, seed: int = 0,
              size: tuple[int, int] = (320, 240), origin: tuple[int, int] = (40, 40),
              n_points: int = 16, n_lines: int = 4, point_noise: float = 0.5,
              degradation: ColorDegradation | None = None) -> SyntheticPair:
    """Build (I1, I2) and ground truth; ``size`` is (width, height) of both views."""
    w, h = size
    x0, y0 = origin
    if x0 < 0 or y0 < 0 or x0 + w > base.width or y0 + h > base.height:
        raise DegenerateInputError("target crop does not fit inside the base image")
    i2 = MultiChannelImage(base.data[y0:y0 + h, x0:x0 + w].copy(), base.mask[y0:y0 + h, x0:x0 + w].copy())
    i1_clean = _render_view(base, field, size, origin)
    if degradation is None:
        degradation = ColorDegradation.from_degree(degree, seed) if degree > 0 else ColorDegradation.identity()
    i1 = apply_degradation(i1_clean, degradation)
    rng = np.random.default_rng(seed)
    corr = sample_correspondences(field, size, rng, n_points, n_lines, point_noise)
    truth = {
        "size": list(size),
        "origin": list(origin),
        "field": field.to_dict(),
        "grid": truth_grid(field, size),
    }
    return SyntheticPair(i1, i1_clean, i2, corr, field, degradation, origin, truth)


def write_pair(out_dir, pair: SyntheticPair) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / "i1.png", pair.i1, bit_depth=16)
    save_image(out / "i1_clean.png", pair.i1_clean, bit_depth=16)
    save_image(out / "i2.png", pair.i2, bit_depth=16)
    dump_json(out / "correspondences.json", pair.correspondences.to_dict())
    dump_json(out / "truth.json", pair.truth)
    dump_json(out / "degradation.json", pair.degradation.to_dict())
