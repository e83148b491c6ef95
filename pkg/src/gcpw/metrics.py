"""Windowed-NCC alignment error on the luma channel."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateInputError
from .imaging import MultiChannelImage, luma

DEFAULT_WINDOW = 5
DEFAULT_SCALE = 100.0
# Windows with a variance below this are flat: NCC is undefined there.
FLAT_VARIANCE = 1e-8


@dataclass
class AlignmentReport:
    raw: float
    scaled: float
    pixel_count: int
    skipped_flat: int

    def to_dict(self) -> dict:
        return asdict(self)


def window_ncc(a: np.ndarray, b: np.ndarray, window: int = DEFAULT_WINDOW):
    """NCC of co-located windows for every pixel whose window is fully inside.

    ``a`` and ``b`` are 2-D planes; returns ``(ncc, var_a, var_b)`` of shape
    (H - window + 1, W - window + 1), indexed by the window's top-left corner.
    """
    wa = sliding_window_view(a, (window, window))
    wb = sliding_window_view(b, (window, window))
    da = wa - wa.mean(axis=(2, 3), keepdims=True)
    db = wb - wb.mean(axis=(2, 3), keepdims=True)
    saa = np.sum(da * da, axis=(2, 3))
    sbb = np.sum(db * db, axis=(2, 3))
    sab = np.sum(da * db, axis=(2, 3))
    denom = np.sqrt(saa * sbb)
    with np.errstate(invalid="ignore", divide="ignore"):
        ncc = sab / denom
    n = window * window
    return ncc, saa / n, sbb / n


def alignment_error(warped_s: MultiChannelImage, t: MultiChannelImage, window: int = DEFAULT_WINDOW,
                    scale: float = DEFAULT_SCALE) -> AlignmentReport:
    """RMSE of (1 - NCC) over W x W windows valid in both images."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be a positive odd integer")
    if (warped_s.height, warped_s.width) != (t.height, t.width):
        raise DegenerateInputError(
            f"canvas mismatch: {warped_s.width}x{warped_s.height} vs {t.width}x{t.height}"
        )
    if warped_s.height < window or warped_s.width < window:
        raise DegenerateInputError("image smaller than the NCC window")
    a, b = luma(warped_s), luma(t)
    valid = warped_s.mask & t.mask
    full = sliding_window_view(valid, (window, window)).all(axis=(2, 3))
    ncc, va, vb = window_ncc(np.where(valid, a, 0.0), np.where(valid, b, 0.0), window)
    flat = full & ((va < FLAT_VARIANCE) | (vb < FLAT_VARIANCE))
    use = full & ~flat
    count = int(use.sum())
    if count == 0:
        raise DegenerateInputError("no pixels with a valid, textured window in both images")
    e = 1.0 - ncc[use]
    raw = float(np.sqrt(np.mean(e * e)))
    return AlignmentReport(raw=raw, scaled=raw * scale, pixel_count=count, skipped_flat=int(flat.sum()))
