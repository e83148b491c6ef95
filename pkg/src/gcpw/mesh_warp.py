"""Uniform grid mesh, bilinear point location and triangle-affine rendering.

Vertex ``(r, c)`` has flat id ``r * (n + 1) + c``.  Each quad with corners
TL, TR, BL, BR is split into the triangles (TL, TR, BL) and (TR, BL, BR);
triangles are listed row-major over quads, first triangle before second.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, SchemaError
from .imaging import MultiChannelImage, bilinear_sample

DEFAULT_ROWS = 32
DEFAULT_COLS = 32
TRIANGLE_ORDER = (("TL", "TR", "BL"), ("TR", "BL", "BR"))

R90 = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass
class GridMesh:
    rows: int
    cols: int
    width: float
    height: float
    vertices: np.ndarray  # (rows + 1, cols + 1, 2), original positions
    warped: np.ndarray  # same shape, current positions

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.warped = np.asarray(self.warped, dtype=np.float64)
        shape = (self.rows + 1, self.cols + 1, 2)
        if self.vertices.shape != shape or self.warped.shape != shape:
            raise ValueError(f"vertex arrays must have shape {shape}")

    @property
    def spacing(self) -> tuple[float, float]:
        return self.width / self.cols, self.height / self.rows

    @property
    def num_vertices(self) -> int:
        return (self.rows + 1) * (self.cols + 1)

    @property
    def num_quads(self) -> int:
        return self.rows * self.cols

    def flat_vertices(self) -> np.ndarray:
        return self.vertices.reshape(-1, 2)

    def flat_warped(self) -> np.ndarray:
        return self.warped.reshape(-1, 2)

    def with_warped(self, warped) -> "GridMesh":
        warped = np.asarray(warped, dtype=np.float64).reshape(self.vertices.shape)
        return GridMesh(self.rows, self.cols, self.width, self.height, self.vertices.copy(), warped.copy())

    def scaled(self, factor: float) -> "GridMesh":
        """Same mesh expressed in a pixel grid ``factor`` times finer."""
        return GridMesh(
            self.rows,
            self.cols,
            self.width * factor,
            self.height * factor,
            self.vertices * factor,
            self.warped * factor,
        )

    def max_displacement(self, other: "GridMesh") -> float:
        return float(np.max(np.linalg.norm(self.warped - other.warped, axis=2)))


@dataclass
class SamplePoint:
    position: np.ndarray
    quad_index: tuple[int, int]
    weights: np.ndarray  # (TL, TR, BL, BR)
    vertex_ids: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))


@dataclass
class TriangleLocalCoords:
    u: float
    v: float


def build_uniform_mesh(width: float, height: float, m: int = DEFAULT_ROWS, n: int = DEFAULT_COLS) -> GridMesh:
    if width < 2 or height < 2:
        raise DegenerateInputError(f"mesh extent {width}x{height} is too small")
    if m < 1 or n < 1:
        raise DegenerateInputError("mesh needs at least one quad per axis")
    cs = np.arange(n + 1) * (width / n)
    rs = np.arange(m + 1) * (height / m)
    xs, ys = np.meshgrid(cs, rs)
    verts = np.stack([xs, ys], axis=2)
    # exact right/bottom edges regardless of rounding in the products above
    verts[:, -1, 0] = width
    verts[-1, :, 1] = height
    return GridMesh(m, n, float(width), float(height), verts, verts.copy())


def locate_points(mesh: GridMesh, points):
    """Vectorised :func:`locate`.

    Returns ``(quads, weights, vertex_ids)`` with shapes (N, 2), (N, 4), (N, 4).
    Quads are (row, col); weights and ids follow TL, TR, BL, BR.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    dx, dy = mesh.spacing
    eps = 1e-9
    x, y = pts[:, 0], pts[:, 1]
    outside = (x < -eps) | (x > mesh.width + eps) | (y < -eps) | (y > mesh.height + eps)
    if np.any(outside):
        raise DegenerateInputError(f"{int(outside.sum())} point(s) outside the mesh extent")
    col = np.clip(np.floor(x / dx).astype(np.int64), 0, mesh.cols - 1)
    row = np.clip(np.floor(y / dy).astype(np.int64), 0, mesh.rows - 1)
    u = np.clip((x - col * dx) / dx, 0.0, 1.0)
    v = np.clip((y - row * dy) / dy, 0.0, 1.0)
    weights = np.column_stack([(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v])
    stride = mesh.cols + 1
    tl = row * stride + col
    ids = np.column_stack([tl, tl + 1, tl + stride, tl + stride + 1])
    return np.column_stack([row, col]), weights, ids


def locate(mesh: GridMesh, q) -> SamplePoint:
    quads, weights, ids = locate_points(mesh, q)
    return SamplePoint(
        position=np.asarray(q, dtype=np.float64).reshape(2),
        quad_index=(int(quads[0, 0]), int(quads[0, 1])),
        weights=weights[0],
        vertex_ids=ids[0],
    )


def inside_extent(mesh: GridMesh, points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    eps = 1e-9
    return (
        (pts[:, 0] >= -eps)
        & (pts[:, 0] <= mesh.width + eps)
        & (pts[:, 1] >= -eps)
        & (pts[:, 1] <= mesh.height + eps)
    )


def warp_points(mesh: GridMesh, points) -> np.ndarray:
    """Warped positions q̂ = Σ w_k v̂_k of points given in the original frame."""
    _, weights, ids = locate_points(mesh, points)
    warped = mesh.flat_warped()
    return np.einsum("nk,nkd->nd", weights, warped[ids])


def local_coords(v1, v2, v3) -> TriangleLocalCoords:
    """Coordinates (u, v) with v1 = v2 + u (v3 - v2) + v R90 (v3 - v2)."""
    v1, v2, v3 = (np.asarray(p, dtype=np.float64) for p in (v1, v2, v3))
    d = v3 - v2
    nd = d @ d
    if np.sqrt(nd) < 1e-9:
        raise DegenerateInputError("degenerate triangle: v2 and v3 coincide")
    e = v1 - v2
    return TriangleLocalCoords(u=float(e @ d / nd), v=float(e @ (R90 @ d) / nd))


def triangulate(mesh: GridMesh) -> np.ndarray:
    """Vertex-id triples, shape (2 * m * n, 3)."""
    stride = mesh.cols + 1
    r, c = np.meshgrid(np.arange(mesh.rows), np.arange(mesh.cols), indexing="ij")
    tl = (r * stride + c).ravel()
    tr, bl, br = tl + 1, tl + stride, tl + stride + 1
    first = np.column_stack([tl, tr, bl])
    second = np.column_stack([tr, bl, br])
    return np.stack([first, second], axis=1).reshape(-1, 3)


def _signed_area(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (c[..., 0] - a[..., 0]) * (b[..., 1] - a[..., 1])


def foldovers(mesh: GridMesh) -> list[int]:
    """Indices of triangles whose warped orientation differs from the original."""
    tris = triangulate(mesh)
    v, w = mesh.flat_vertices(), mesh.flat_warped()
    a0 = _signed_area(v[tris[:, 0]], v[tris[:, 1]], v[tris[:, 2]])
    a1 = _signed_area(w[tris[:, 0]], w[tris[:, 1]], w[tris[:, 2]])
    bad = (np.sign(a0) != np.sign(a1)) | (np.abs(a1) < 1e-12)
    return [int(i) for i in np.flatnonzero(bad)]


def backward_map(mesh: GridMesh, canvas: tuple[int, int]):
    """Source coordinates for every canvas pixel under the warped mesh.

    Returns ``(sx, sy, covered)``.  The first triangle covering a pixel wins.
    """
    h, w = canvas
    sx = np.zeros((h, w))
    sy = np.zeros((h, w))
    covered = np.zeros((h, w), dtype=bool)
    tris = triangulate(mesh)
    src = mesh.flat_vertices()
    dst = mesh.flat_warped()
    eps = 1e-9
    for t in tris:
        a, b, c = dst[t[0]], dst[t[1]], dst[t[2]]
        d = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        if abs(d) < 1e-12:
            continue
        xs = (a[0], b[0], c[0])
        ys = (a[1], b[1], c[1])
        x0 = max(0, int(np.ceil(min(xs) - eps)))
        x1 = min(w - 1, int(np.floor(max(xs) + eps)))
        y0 = max(0, int(np.ceil(min(ys) - eps)))
        y1 = min(h - 1, int(np.floor(max(ys) + eps)))
        if x0 > x1 or y0 > y1:
            continue
        py, px = np.mgrid[y0:y1 + 1, x0:x1 + 1].astype(np.float64)
        ex, ey = px - a[0], py - a[1]
        lb = (ex * (c[1] - a[1]) - (c[0] - a[0]) * ey) / d
        lc = ((b[0] - a[0]) * ey - ex * (b[1] - a[1])) / d
        la = 1.0 - lb - lc
        inside = (la >= -eps) & (lb >= -eps) & (lc >= -eps)
        region = (slice(y0, y1 + 1), slice(x0, x1 + 1))
        take = inside & ~covered[region]
        if not take.any():
            continue
        sa, sb, sc = src[t[0]], src[t[1]], src[t[2]]
        sx[region] = np.where(take, la * sa[0] + lb * sb[0] + lc * sc[0], sx[region])
        sy[region] = np.where(take, la * sa[1] + lb * sb[1] + lc * sc[1], sy[region])
        covered[region] |= take
    return sx, sy, covered


def warp_render(src: MultiChannelImage, mesh: GridMesh, canvas: tuple[int, int] | None = None):
    """Render ``src`` through the mesh by backward triangle-affine mapping.

    ``canvas`` is (height, width) and defaults to the source size.  Returns
    ``(image, folded)`` where ``folded`` lists inverted triangle indices.
    """
    if canvas is None:
        canvas = (src.height, src.width)
    sx, sy, covered = backward_map(mesh, canvas)
    values, valid = bilinear_sample(src.data, src.mask, sx.ravel(), sy.ravel())
    valid = valid.reshape(canvas) & covered
    data = np.where(valid[:, :, None], values.reshape(canvas + (src.channels,)), 0.0)
    return MultiChannelImage(data, valid), foldovers(mesh)


def mesh_to_dict(mesh: GridMesh) -> dict:
    return {
        "m": mesh.rows,
        "n": mesh.cols,
        "width": mesh.width,
        "height": mesh.height,
        "triangle_order": [list(t) for t in TRIANGLE_ORDER],
        "v": mesh.flat_vertices().tolist(),
        "v_hat": mesh.flat_warped().tolist(),
    }


def mesh_from_dict(d: dict) -> GridMesh:
    try:
        m, n = int(d["m"]), int(d["n"])
        shape = (m + 1, n + 1, 2)
        v = np.asarray(d["v"], dtype=np.float64).reshape(shape)
        v_hat = np.asarray(d["v_hat"], dtype=np.float64).reshape(shape)
        return GridMesh(m, n, float(d["width"]), float(d["height"]), v, v_hat)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"invalid mesh document: {exc}") from exc
