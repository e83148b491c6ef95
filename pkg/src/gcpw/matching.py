"""Minimal corner + patch-NCC matcher.

Only meant as a fallback when no external correspondences are available.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError
from .imaging import MultiChannelImage, luma
from .io_formats import CorrespondenceSet


@dataclass
class MatchConfig:
    max_corners: int = 500
    patch_radius: int = 5
    harris_k: float = 0.04
    harris_sigma: float = 1.5
    nms_radius: int = 3
    min_response: float = 0.01  # relative to the strongest response
    ratio: float = 0.8
    min_ncc: float = 0.8


def harris_corners(gray: np.ndarray, mask: np.ndarray, cfg: MatchConfig) -> np.ndarray:
    """Top-K Harris corners as integer (x, y), strongest first."""
    gx = ndimage.sobel(gray, axis=1, mode="nearest")
    gy = ndimage.sobel(gray, axis=0, mode="nearest")
    sxx = ndimage.gaussian_filter(gx * gx, cfg.harris_sigma)
    syy = ndimage.gaussian_filter(gy * gy, cfg.harris_sigma)
    sxy = ndimage.gaussian_filter(gx * gy, cfg.harris_sigma)
    response = sxx * syy - sxy * sxy - cfg.harris_k * (sxx + syy) ** 2

    r = cfg.patch_radius
    usable = ndimage.minimum_filter(mask, size=2 * r + 1, mode="constant", cval=False)
    usable[:r, :] = usable[-r:, :] = False
    usable[:, :r] = usable[:, -r:] = False
    response = np.where(usable, response, -np.inf)
    peak = response.max() if np.isfinite(response).any() else 0.0
    if peak <= 0:
        return np.zeros((0, 2), dtype=np.int64)
    local_max = ndimage.maximum_filter(response, size=2 * cfg.nms_radius + 1, mode="nearest")
    ys, xs = np.nonzero((response == local_max) & (response > cfg.min_response * peak))
    order = np.lexsort((xs, ys, -response[ys, xs]))[: cfg.max_corners]
    return np.column_stack([xs[order], ys[order]])


def _patches(gray: np.ndarray, corners: np.ndarray, r: int):
    offs = np.arange(-r, r + 1)
    yy = corners[:, 1, None, None] + offs[None, :, None]
    xx = corners[:, 0, None, None] + offs[None, None, :]
    p = gray[yy, xx].reshape(len(corners), -1)
    p = p - p.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(p, axis=1)
    ok = norm > 1e-6
    return p[ok] / norm[ok, None], corners[ok]


def simple_match(I1: MultiChannelImage, I2: MultiChannelImage, config: MatchConfig | None = None) -> CorrespondenceSet:
    cfg = config or MatchConfig()
    g1, g2 = luma(I1), luma(I2)
    c1 = harris_corners(g1, I1.mask, cfg)
    c2 = harris_corners(g2, I2.mask, cfg)
    matches = []
    if len(c1) >= 2 and len(c2) >= 2:
        p1, c1 = _patches(g1, c1, cfg.patch_radius)
        p2, c2 = _patches(g2, c2, cfg.patch_radius)
        if len(c1) >= 2 and len(c2) >= 2:
            ncc = p1 @ p2.T
            best = np.argmax(ncc, axis=1)
            back = np.argmax(ncc, axis=0)
            top2 = -np.sort(-ncc, axis=1)[:, :2]
            for i, j in enumerate(best):
                d1, d2 = 1.0 - top2[i, 0], 1.0 - top2[i, 1]
                if back[j] != i or top2[i, 0] < cfg.min_ncc or d1 >= cfg.ratio * d2:
                    continue
                matches.append([*c1[i], *c2[j]])
    if len(matches) < 4:
        raise DegenerateInputError(
            f"only {len(matches)} consistent corner matches; supply correspondences with --corr"
        )
    return CorrespondenceSet(np.asarray(matches, dtype=np.float64), frame="input")
