import numpy as np
import pytest

from gcpw.errors import DegenerateInputError
from gcpw.imaging import MultiChannelImage, bilinear_sample
from gcpw.mesh_warp import (
    build_uniform_mesh,
    foldovers,
    inside_extent,
    local_coords,
    locate,
    locate_points,
    mesh_from_dict,
    mesh_to_dict,
    triangulate,
    warp_points,
    warp_render,
)

from conftest import textured


def test_uniform_mesh_layout():
    mesh = build_uniform_mesh(64, 64, 2, 2)
    assert mesh.num_vertices == 9
    assert sorted(map(tuple, mesh.flat_vertices().tolist())) == [
        (x, y) for x in (0.0, 32.0, 64.0) for y in (0.0, 32.0, 64.0)
    ]
    assert build_uniform_mesh(320, 240, 32, 32).spacing == (10.0, 7.5)
    # vertex id = r * (n + 1) + c
    m = build_uniform_mesh(30, 20, 2, 3)
    assert m.flat_vertices()[1 * 4 + 2].tolist() == [20.0, 10.0]


def test_uniform_mesh_rejects_degenerate():
    with pytest.raises(DegenerateInputError):
        build_uniform_mesh(1, 10, 2, 2)
    with pytest.raises(DegenerateInputError):
        build_uniform_mesh(10, 10, 0, 2)


def test_locate_vertex_centre_and_fraction():
    mesh = build_uniform_mesh(20, 20, 2, 2)
    sp = locate(mesh, (10.0, 10.0))
    assert sorted(sp.weights.tolist()) == [0.0, 0.0, 0.0, 1.0]
    assert mesh.flat_vertices()[sp.vertex_ids[np.argmax(sp.weights)]].tolist() == [10.0, 10.0]
    sp = locate(mesh, (5.0, 15.0))
    assert sp.quad_index == (1, 0)
    np.testing.assert_allclose(sp.weights, 0.25)
    sp = locate(mesh, (13.0, 6.0))
    assert sp.quad_index == (0, 1)
    np.testing.assert_allclose(sp.weights, [0.28, 0.12, 0.42, 0.18], atol=1e-12)


def test_locate_outside_raises():
    mesh = build_uniform_mesh(20, 20, 2, 2)
    with pytest.raises(DegenerateInputError):
        locate_points(mesh, [[21.0, 3.0]])
    assert inside_extent(mesh, [[20.0, 20.0], [-0.5, 1.0]]).tolist() == [True, False]


def test_locate_reconstructs_points(rng):
    mesh = build_uniform_mesh(37, 23, 5, 4)
    pts = rng.uniform([0, 0], [37, 23], size=(200, 2))
    np.testing.assert_allclose(warp_points(mesh, pts), pts, atol=1e-12)


@pytest.mark.parametrize("v1,v2,v3,uv", [
    ((1.0, 2.0), (0.0, 0.0), (1.0, 2.0), (1.0, 0.0)),
    ((3.0, 1.0), (3.0, 1.0), (5.0, 4.0), (0.0, 0.0)),
    ((0.5, 0.5), (0.0, 0.0), (1.0, 0.0), (0.5, -0.5)),
])
def test_local_coords_examples(v1, v2, v3, uv):
    lc = local_coords(v1, v2, v3)
    assert (lc.u, lc.v) == pytest.approx(uv, abs=1e-12)


def test_local_coords_reconstruct_and_degenerate(rng):
    r90 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    for _ in range(20):
        v1, v2, v3 = rng.normal(size=(3, 2))
        lc = local_coords(v1, v2, v3)
        np.testing.assert_allclose(v2 + lc.u * (v3 - v2) + lc.v * r90 @ (v3 - v2), v1, atol=1e-10)
    with pytest.raises(DegenerateInputError):
        local_coords((1, 1), (0, 0), (0, 0))


@pytest.mark.parametrize("m,n,count", [(1, 1, 2), (2, 2, 8), (32, 32, 2048)])
def test_triangle_counts(m, n, count):
    assert triangulate(build_uniform_mesh(64, 64, m, n)).shape == (count, 3)


def test_triangle_order_in_quad():
    tris = triangulate(build_uniform_mesh(10, 10, 1, 1))
    assert tris.tolist() == [[0, 1, 2], [1, 2, 3]]


def test_warp_render_identity_and_translation():
    img = textured(24, 32)
    mesh = build_uniform_mesh(img.width, img.height, 4, 4)
    out, folded = warp_render(img, mesh)
    assert folded == []
    inner = (slice(0, 24), slice(0, 32))
    assert out.mask[inner].all()
    np.testing.assert_allclose(out.data, img.data, atol=1e-12)

    moved = mesh.with_warped(mesh.warped + np.array([5.0, 0.0]))
    out, _ = warp_render(img, moved, (24, 40))
    np.testing.assert_allclose(out.data[:, 5:37][out.mask[:, 5:37]],
                               img.data[out.mask[:, 5:37]], atol=1e-12)
    assert not out.mask[:, :5].any()


def test_warp_render_single_vertex_matches_triangle_affine():
    img = textured(40, 40, seed=3)
    mesh = build_uniform_mesh(40, 40, 2, 2)
    warped = mesh.warped.copy()
    warped[1, 1] += (2.0, 1.0)
    mesh = mesh.with_warped(warped)
    out, folded = warp_render(img, mesh)
    assert folded == []
    V, W = mesh.flat_vertices(), mesh.flat_warped()
    tris = triangulate(mesh)
    checked = 0
    for y in range(40):
        for x in range(40):
            if not out.mask[y, x]:
                continue
            # oracle: first triangle containing the pixel, its affine map solved directly
            for t in tris:
                A = np.array([[*W[k], 1.0] for k in t])
                lam = np.linalg.solve(A.T, [x, y, 1.0])
                if np.all(lam >= -1e-9):
                    break
            M = np.linalg.lstsq(np.column_stack([W[t], np.ones(3)]), V[t], rcond=None)[0]
            sx, sy = np.array([x, y, 1.0]) @ M
            expected, ok = bilinear_sample(img.data, img.mask, np.array([sx]), np.array([sy]))
            assert ok[0]
            np.testing.assert_allclose(out.data[y, x], expected[0], atol=1e-9)
            checked += 1
    assert checked > 1400


def test_warp_render_preserves_constant(rng):
    img = MultiChannelImage.full(np.full((30, 30, 3), 0.42))
    mesh = build_uniform_mesh(30, 30, 3, 3)
    mesh = mesh.with_warped(mesh.warped + rng.uniform(-1.5, 1.5, size=mesh.warped.shape))
    out, _ = warp_render(img, mesh)
    np.testing.assert_allclose(out.data[out.mask], 0.42, atol=1e-12)


def test_foldovers_detected():
    mesh = build_uniform_mesh(20, 20, 2, 2)
    assert foldovers(mesh) == []
    warped = mesh.warped.copy()
    warped[1, 1] = (25.0, 25.0)
    assert len(foldovers(mesh.with_warped(warped))) > 0


def test_mesh_json_roundtrip(rng):
    mesh = build_uniform_mesh(50, 40, 3, 5)
    mesh = mesh.with_warped(mesh.warped + rng.normal(size=mesh.warped.shape))
    back = mesh_from_dict(mesh_to_dict(mesh))
    assert (back.warped == mesh.warped).all() and (back.vertices == mesh.vertices).all()
    assert (back.rows, back.cols, back.width, back.height) == (3, 5, 50.0, 40.0)


def test_scaled_mesh():
    mesh = build_uniform_mesh(40, 20, 2, 2).scaled(0.5)
    assert (mesh.width, mesh.height) == (20.0, 10.0)
    assert mesh.flat_vertices()[-1].tolist() == [20.0, 10.0]
