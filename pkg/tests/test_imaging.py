import numpy as np
import pytest

from gcpw.errors import DegenerateInputError
from gcpw.imaging import (
    MultiChannelImage,
    bilinear_sample,
    build_pyramid,
    encode_png,
    from_ycbcr,
    gradient_at,
    load_image,
    luma,
    sample_overlap_points,
    save_image,
    to_ycbcr,
)

from conftest import textured


def _ycc(rgb):
    return to_ycbcr(MultiChannelImage.full(np.array(rgb, dtype=float).reshape(1, 1, 3))).data[0, 0]


def bt601(r, g, b):
    # full-range BT.601 written out term by term
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 0.5 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 0.5 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return np.array([y, cb, cr])


@pytest.mark.parametrize("rgb,expected", [
    ((0, 0, 0), (0, 0.5, 0.5)),
    ((1, 1, 1), (1, 0.5, 0.5)),
    ((1, 0, 0), (0.299, 0.331264, 1.0)),
])
def test_ycbcr_reference_colours(rgb, expected):
    np.testing.assert_allclose(_ycc(rgb), expected, atol=1e-12)


def test_ycbcr_matches_formula_and_roundtrips(rng):
    rgb = rng.uniform(size=(5, 7, 3))
    img = MultiChannelImage.full(rgb)
    ycc = to_ycbcr(img)
    oracle = np.stack([bt601(*px) for px in rgb.reshape(-1, 3)]).reshape(rgb.shape)
    np.testing.assert_allclose(ycc.data, oracle, atol=1e-12)
    np.testing.assert_allclose(from_ycbcr(ycc).data, rgb, atol=1e-12)
    np.testing.assert_allclose(luma(img), oracle[:, :, 0], atol=1e-12)


def test_pyramid_sizes_and_constant():
    img = MultiChannelImage.full(np.full((240, 320, 3), 0.37))
    pyr = build_pyramid(img, 3)
    assert [(p.width, p.height) for p in pyr] == [(320, 240), (160, 120), (80, 60)]
    for p in pyr:
        np.testing.assert_allclose(p.data, 0.37, atol=1e-12)
    single = build_pyramid(img, 1)
    assert len(single) == 1 and single[0] is img


def test_pyramid_erodes_mask():
    mask = np.ones((16, 16), dtype=bool)
    mask[:, 8:] = False
    img = MultiChannelImage(np.ones((16, 16, 1)), mask)
    coarse = build_pyramid(img, 2)[1]
    # half-resolution column 3 sits at full-res column 6, within 2 px of the hole
    assert coarse.mask[:, :3].all() and not coarse.mask[:, 3:].any()


def test_pyramid_too_small():
    with pytest.raises(DegenerateInputError):
        build_pyramid(MultiChannelImage.full(np.zeros((3, 3, 1))), 3)


def test_bilinear_integer_centre_and_weights():
    plane = np.array([[1.0, 2.0], [3.0, 4.0]])
    mask = np.ones_like(plane, dtype=bool)
    v, ok = bilinear_sample(plane, mask, 1.0, 0.0)
    assert ok and v == 2.0
    v, ok = bilinear_sample(plane, mask, 0.5, 0.5)
    assert ok and v == pytest.approx(2.5, abs=1e-15)
    # weights at (0.25, 0.75): TL (1-u)(1-v), TR u(1-v), BL (1-u)v, BR uv
    u, w = 0.25, 0.75
    weights = np.array([(1 - u) * (1 - w), u * (1 - w), (1 - u) * w, u * w])
    np.testing.assert_allclose(weights, [0.1875, 0.0625, 0.5625, 0.1875])
    v, ok = bilinear_sample(plane, mask, 0.25, 0.75)
    assert ok and v == pytest.approx(weights @ [1, 2, 3, 4], abs=1e-15)


def test_bilinear_masks_and_bounds():
    plane = np.arange(9.0).reshape(3, 3)
    mask = np.ones((3, 3), dtype=bool)
    mask[1, 1] = False
    _, ok = bilinear_sample(plane, mask, np.array([0.5, 0.0, 2.0, 2.5, -0.1]), np.array([0.5, 0.0, 2.0, 0.0, 0.0]))
    assert ok.tolist() == [False, True, True, False, False]


def test_bilinear_multichannel(rng):
    data = rng.uniform(size=(4, 5, 3))
    vals, ok = bilinear_sample(data, np.ones((4, 5), bool), np.array([1.5]), np.array([2.25]))
    expected = 0.375 * data[2, 1] + 0.375 * data[2, 2] + 0.125 * data[3, 1] + 0.125 * data[3, 2]
    assert ok[0]
    np.testing.assert_allclose(vals[0], expected, atol=1e-15)


def test_gradient_ramp_constant_quadratic():
    h, w = 10, 20
    xs = np.tile(np.arange(w, dtype=float), (h, 1))
    mask = np.ones((h, w), bool)
    gx, gy, ok = gradient_at(xs / w, mask, 7.3, 4.6)
    assert ok and gx == pytest.approx(1 / w, abs=1e-12) and gy == pytest.approx(0, abs=1e-12)
    gx, gy, ok = gradient_at(np.full((h, w), 0.4), mask, 5.0, 5.0)
    assert ok and gx == pytest.approx(0, abs=1e-15) and gy == pytest.approx(0, abs=1e-15)
    gx, _, ok = gradient_at((xs / w) ** 2, mask, w / 2, 3.0)
    assert ok and gx == pytest.approx(1 / w, abs=1e-12)


def test_gradient_needs_full_neighbourhood():
    mask = np.ones((5, 5), bool)
    mask[2, 3] = False
    _, _, ok = gradient_at(np.zeros((5, 5)), mask, np.array([2.0, 1.0, 0.0]), np.array([2.0, 1.0, 2.0]))
    assert ok.tolist() == [False, True, False]


def test_overlap_points_full_and_disjoint():
    full = np.ones((9, 9), bool)
    pts = sample_overlap_points(full, full, 3)
    # stride {0,3,6}^2 minus the points whose gradient stencil leaves the raster
    assert pts.tolist() == [[3, 3], [6, 3], [3, 6], [6, 6]]
    a = np.zeros((9, 9), bool)
    a[:, :4] = True
    assert sample_overlap_points(a, ~a, 3).shape == (0, 2)


def test_overlap_points_half_overlap_oracle():
    h, w = 6, 12
    ms = np.zeros((h, w), bool)
    mt = np.zeros((h, w), bool)
    ms[:, :8] = True
    mt[:, 4:] = True
    expected = []
    for y in range(0, h, 3):
        for x in range(0, w, 3):
            stencil = [(x, y), (x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]
            if ms[y, x] and all(0 <= a < w and 0 <= b < h and mt[b, a] for a, b in stencil):
                expected.append([x, y])
    got = sample_overlap_points(ms, mt, 3).tolist()
    assert got == expected and len(got) > 0


@pytest.mark.parametrize("depth", [8, 16])
def test_png_roundtrip(tmp_path, depth):
    img = textured(12, 10)
    img.mask[0, :3] = False
    path = tmp_path / f"x{depth}.png"
    save_image(path, img, bit_depth=depth)
    back = load_image(path)
    assert (back.mask == img.mask).all()
    tol = 0.5 / (255 if depth == 8 else 65535) + 1e-12
    np.testing.assert_allclose(back.data[img.mask], img.data[img.mask], atol=tol)


def test_png_encoding_is_deterministic():
    img = textured(8, 8)
    assert encode_png(img, 16) == encode_png(img.copy(), 16)


def test_ppm_and_missing(tmp_path):
    import cv2

    arr = (np.arange(4 * 5 * 3).reshape(4, 5, 3) * 4).astype(np.uint8)
    cv2.imwrite(str(tmp_path / "a.ppm"), arr)
    img = load_image(tmp_path / "a.ppm")
    np.testing.assert_allclose(img.data, arr[:, :, ::-1] / 255.0)
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "missing.png")
