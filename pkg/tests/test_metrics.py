import numpy as np
import pytest

from gcpw.errors import DegenerateInputError
from gcpw.imaging import MultiChannelImage
from gcpw.metrics import alignment_error

import oracles
from conftest import textured


def grey(arr, mask=None):
    arr = np.asarray(arr, dtype=float)
    return MultiChannelImage(np.repeat(arr[:, :, None], 3, axis=2),
                             np.ones(arr.shape, bool) if mask is None else mask)


def test_identical_images_score_zero(texture):
    rep = alignment_error(texture, texture)
    assert rep.raw == pytest.approx(0.0, abs=1e-7) and rep.scaled == pytest.approx(0.0, abs=1e-5)
    assert rep.pixel_count == (48 - 4) * (64 - 4)


def test_positive_affine_invariance(texture):
    other = textured(48, 64, seed=9)
    base = alignment_error(texture, other).raw
    mapped = MultiChannelImage(0.4 * texture.data + 0.3, texture.mask)
    assert alignment_error(mapped, texture).raw == pytest.approx(0.0, abs=1e-6)
    assert alignment_error(mapped, other).raw == pytest.approx(base, abs=1e-6)


def test_symmetric_and_bounded(texture):
    other = textured(48, 64, seed=4)
    a = alignment_error(texture, other)
    b = alignment_error(other, texture)
    assert a.raw == pytest.approx(b.raw, abs=1e-12)
    inverted = MultiChannelImage(1.0 - texture.data, texture.mask)
    worst = alignment_error(texture, inverted)
    assert worst.raw == pytest.approx(2.0, abs=1e-9) and worst.scaled <= 200 + 1e-9


def test_brute_force_oracle_7x7(rng):
    a = rng.uniform(size=(7, 7))
    b = rng.uniform(size=(7, 7))
    mb = np.ones((7, 7), bool)
    mb[6, 0] = False
    rep = alignment_error(grey(a), grey(b, mb))
    # masks make the bottom-left window invalid
    assert rep.pixel_count == 8
    assert rep.raw == pytest.approx(oracles.window_ncc_metric(a, b, np.ones((7, 7), bool), mb), abs=1e-9)
    assert rep.scaled == pytest.approx(100 * rep.raw, abs=1e-12)


def test_flat_windows_skipped(rng):
    a = rng.uniform(size=(7, 7))
    a[:, :5] = 0.5
    b = rng.uniform(size=(7, 7))
    rep = alignment_error(grey(a), grey(b))
    assert rep.skipped_flat == 3
    assert rep.raw == pytest.approx(oracles.window_ncc_metric(a, b, np.ones((7, 7), bool), np.ones((7, 7), bool)),
                                    abs=1e-9)


def test_errors():
    a = grey(np.zeros((7, 7)))
    with pytest.raises(DegenerateInputError):
        alignment_error(a, a)  # everything flat
    with pytest.raises(DegenerateInputError):
        alignment_error(a, grey(np.zeros((8, 7))))
    with pytest.raises(ValueError):
        alignment_error(a, a, window=4)
