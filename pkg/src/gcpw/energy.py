"""Residual rows for every energy term, linear in the packed unknown vector.

Packing order of the full parameter vector:

* vertex ``k`` (flat id) -> columns ``2k`` (x) and ``2k + 1`` (y);
* then, starting at ``2 (m + 1)(n + 1)``, for quad ``q = r * n + c`` and
  channel ``ch``: gain at ``base + 2 (q * C + ch)``, bias right after it.

A :class:`UnknownLayout` marks which of these are free.  Fixed columns are
moved into the row constants at assembly time using the current state, which
is how the colour-only initialisation and the mesh-only variants are solved.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .color_model import SMOOTHNESS_SAMPLES, ColorModel
from .imaging import MultiChannelImage, bilinear_sample, gradient_at
from .mesh_warp import GridMesh, inside_extent, locate_points, triangulate

logger = logging.getLogger(__name__)


@dataclass
class TermWeights:
    photometric: float = 100.0
    geometric: float = 1.0
    similarity: float = 0.5
    color: float = 1.0
    line: float | None = None  # defaults to the geometric weight

    def __post_init__(self):
        for name in ("photometric", "geometric", "similarity", "color"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be nonnegative")
        if self.line is not None and self.line < 0:
            raise ValueError("weight line must be nonnegative")

    @property
    def line_weight(self) -> float:
        return self.geometric if self.line is None else self.line


@dataclass
class UnknownLayout:
    rows: int
    cols: int
    channels: int = 3
    solve_vertices: bool = True
    solve_color: bool = True

    @property
    def num_vertex_params(self) -> int:
        return 2 * (self.rows + 1) * (self.cols + 1)

    @property
    def num_color_params(self) -> int:
        return 2 * self.channels * self.rows * self.cols

    @property
    def full_size(self) -> int:
        return self.num_vertex_params + self.num_color_params

    @property
    def color_base(self) -> int:
        return self.num_vertex_params

    @property
    def size(self) -> int:
        """Number of free unknowns."""
        return (self.num_vertex_params if self.solve_vertices else 0) + (
            self.num_color_params if self.solve_color else 0
        )

    def vertex_col(self, vid, axis):
        return 2 * np.asarray(vid) + axis

    def gain_col(self, quad, channel):
        return self.color_base + 2 * (np.asarray(quad) * self.channels + np.asarray(channel))

    def bias_col(self, quad, channel):
        return self.gain_col(quad, channel) + 1

    def free_mask(self) -> np.ndarray:
        mask = np.zeros(self.full_size, dtype=bool)
        mask[: self.num_vertex_params] = self.solve_vertices
        mask[self.num_vertex_params:] = self.solve_color
        return mask

    def reduced_index(self) -> np.ndarray:
        """Full column -> free column, -1 for fixed columns."""
        mask = self.free_mask()
        idx = np.full(self.full_size, -1, dtype=np.int64)
        idx[mask] = np.arange(int(mask.sum()))
        return idx

    def pack(self, mesh: GridMesh, model: ColorModel) -> np.ndarray:
        return np.concatenate([mesh.flat_warped().ravel(), np.stack([model.gains, model.biases], axis=3).ravel()])

    def unpack(self, x):
        x = np.asarray(x, dtype=np.float64)
        warped = x[: self.num_vertex_params].reshape(self.rows + 1, self.cols + 1, 2)
        gb = x[self.num_vertex_params:].reshape(self.rows, self.cols, self.channels, 2)
        return warped.copy(), gb[..., 0].copy(), gb[..., 1].copy()


@dataclass
class ResidualRow:
    coefficients: list[tuple[int, float]]
    constant: float
    weight: float

    def value(self, x) -> float:
        return self.weight * (sum(v * x[c] for c, v in self.coefficients) + self.constant)


@dataclass
class RowBlock:
    """A batch of same-width residual rows: r = weight * (vals . x[cols] + const)."""

    name: str
    cols: np.ndarray
    vals: np.ndarray
    const: np.ndarray
    weight: float = 1.0
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, name: str, width: int = 1, weight: float = 1.0) -> "RowBlock":
        return cls(name, np.zeros((0, width), dtype=np.int64), np.zeros((0, width)), np.zeros(0), weight)

    def __len__(self) -> int:
        return len(self.const)

    def residuals(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if len(self) == 0:
            return np.zeros(0)
        return self.weight * (np.sum(self.vals * x[self.cols], axis=1) + self.const)

    def energy(self, x) -> float:
        r = self.residuals(x)
        return float(r @ r)

    def to_rows(self) -> list[ResidualRow]:
        return [
            ResidualRow([(int(c), float(v)) for c, v in zip(cs, vs)], float(k), float(self.weight))
            for cs, vs, k in zip(self.cols, self.vals, self.const)
        ]


def photometric_rows(points, I_s: MultiChannelImage, I_t: MultiChannelImage, layout: UnknownLayout,
                     mesh: GridMesh, weight: float = 1.0) -> RowBlock:
    """Linearised colour-compensated photometric residuals.

    ``points`` are sample positions q in the source frame.  Per sample and
    channel: r = g I_s(q) + b - I_t(q̂0) - grad I_t(q̂0) . (q̂ - q̂0) with q̂ the
    bilinear combination of warped vertices.  Samples whose source value or
    target lookup is invalid are dropped; ``meta`` records what was kept.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    nch = I_s.channels
    width = 4 * 2 + 2
    if len(pts) == 0:
        return RowBlock.empty("photometric", width, weight)
    pts = pts[inside_extent(mesh, pts)]
    quads, w, ids = locate_points(mesh, pts)
    warped = mesh.flat_warped()
    q0 = np.einsum("nk,nkd->nd", w, warped[ids])

    src, ok_s = bilinear_sample(I_s.data, I_s.mask, pts[:, 0], pts[:, 1])
    tgt, ok_t = bilinear_sample(I_t.data, I_t.mask, q0[:, 0], q0[:, 1])
    gx, gy, ok_g = gradient_at(I_t.data, I_t.mask, q0[:, 0], q0[:, 1])
    keep = ok_s & ok_t & ok_g
    pts, quads, w, ids, q0 = pts[keep], quads[keep], w[keep], ids[keep], q0[keep]
    src, tgt, gx, gy = src[keep], tgt[keep], gx[keep], gy[keep]
    k = len(pts)
    if k == 0:
        block = RowBlock.empty("photometric", width, weight)
        block.meta.update(points=pts, quads=quads)
        return block

    quad_flat = quads[:, 0] * layout.cols + quads[:, 1]
    cols = np.empty((k, nch, width), dtype=np.int64)
    vals = np.empty((k, nch, width))
    cols[:, :, 0:4] = layout.vertex_col(ids, 0)[:, None, :]
    cols[:, :, 4:8] = layout.vertex_col(ids, 1)[:, None, :]
    ch = np.arange(nch)
    cols[:, :, 8] = layout.gain_col(quad_flat[:, None], ch[None, :])
    cols[:, :, 9] = cols[:, :, 8] + 1
    vals[:, :, 0:4] = -w[:, None, :] * gx[:, :, None]
    vals[:, :, 4:8] = -w[:, None, :] * gy[:, :, None]
    vals[:, :, 8] = src
    vals[:, :, 9] = 1.0
    const = -tgt + gx * q0[:, 0:1] + gy * q0[:, 1:2]
    block = RowBlock("photometric", cols.reshape(-1, width), vals.reshape(-1, width), const.reshape(-1), weight)
    block.meta.update(points=pts, quads=quads)
    return block


def point_rows(src_points, dst_points, layout: UnknownLayout, mesh: GridMesh, weight: float = 1.0) -> RowBlock:
    """Two rows (x, y) per match pulling the warped p towards p'."""
    p = np.asarray(src_points, dtype=np.float64).reshape(-1, 2)
    p2 = np.asarray(dst_points, dtype=np.float64).reshape(-1, 2)
    ok = inside_extent(mesh, p)
    if not ok.all():
        logger.warning("skipping %d point match(es) outside the mesh", int((~ok).sum()))
    p, p2 = p[ok], p2[ok]
    if len(p) == 0:
        return RowBlock.empty("point", 4, weight)
    _, w, ids = locate_points(mesh, p)
    cols = np.stack([layout.vertex_col(ids, 0), layout.vertex_col(ids, 1)], axis=1).reshape(-1, 4)
    vals = np.repeat(w, 2, axis=0)
    const = -p2.reshape(-1)
    return RowBlock("point", cols, vals, const, weight)


def line_through(a, b):
    """Normalised line [a', b', c'] through two points (a'^2 + b'^2 = 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    t = b - a
    norm = np.hypot(t[0], t[1])
    if norm < 1e-12:
        raise ValueError("zero-length segment")
    nx, ny = -t[1] / norm, t[0] / norm
    return np.array([nx, ny, -(nx * a[0] + ny * a[1])])


def segment_samples(a, b, interval: float) -> np.ndarray:
    """Points every ``interval`` pixels from a to b, both endpoints included."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    length = np.hypot(*(b - a))
    ts = np.arange(0.0, length, interval)
    if len(ts) == 0 or length - ts[-1] > 1e-9:
        ts = np.append(ts, length)
    return a + (ts / length)[:, None] * (b - a)


def line_rows(src_segments, dst_segments, layout: UnknownLayout, mesh: GridMesh,
              interval: float = 5.0, weight: float = 1.0) -> RowBlock:
    """One row per sample along each source segment: distance to the target line."""
    src = np.asarray(src_segments, dtype=np.float64).reshape(-1, 2, 2)
    dst = np.asarray(dst_segments, dtype=np.float64).reshape(-1, 2, 2)
    pts, coeffs = [], []
    for (a, b), (c, d) in zip(src, dst):
        if np.hypot(*(b - a)) < 1e-12 or np.hypot(*(d - c)) < 1e-12:
            logger.warning("skipping zero-length line segment")
            continue
        s = segment_samples(a, b, interval)
        inside = inside_extent(mesh, s)
        if not inside.all():
            logger.warning("dropping %d line sample(s) outside the mesh", int((~inside).sum()))
            s = s[inside]
        pts.append(s)
        coeffs.append(np.repeat(line_through(c, d)[None, :], len(s), axis=0))
    if not pts or sum(len(s) for s in pts) == 0:
        return RowBlock.empty("line", 8, weight)
    pts = np.concatenate(pts)
    coeffs = np.concatenate(coeffs)
    _, w, ids = locate_points(mesh, pts)
    cols = np.concatenate([layout.vertex_col(ids, 0), layout.vertex_col(ids, 1)], axis=1)
    vals = np.concatenate([w * coeffs[:, 0:1], w * coeffs[:, 1:2]], axis=1)
    return RowBlock("line", cols, vals, coeffs[:, 2].copy(), weight)


def triangle_local_coords(mesh: GridMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(triangles, u, v) computed from the original vertex positions."""
    tris = triangulate(mesh)
    V = mesh.flat_vertices()
    v1, v2, v3 = V[tris[:, 0]], V[tris[:, 1]], V[tris[:, 2]]
    d = v3 - v2
    e = v1 - v2
    nd = np.sum(d * d, axis=1)
    u = np.sum(e * d, axis=1) / nd
    # R90 d = (d_y, -d_x)
    v = (e[:, 0] * d[:, 1] - e[:, 1] * d[:, 0]) / nd
    return tris, u, v


def similarity_rows(mesh: GridMesh, layout: UnknownLayout, weight: float = 1.0) -> RowBlock:
    """Two rows per triangle keeping v̂1 at its original local coordinates."""
    tris, u, v = triangle_local_coords(mesh)
    i1, i2, i3 = tris[:, 0], tris[:, 1], tris[:, 2]
    x = lambda i: layout.vertex_col(i, 0)  # noqa: E731
    y = lambda i: layout.vertex_col(i, 1)  # noqa: E731
    zero = np.zeros_like(u)
    one = np.ones_like(u)
    # x: v̂1x - v̂2x - u (v̂3x - v̂2x) - v (v̂3y - v̂2y)
    cx = np.stack([x(i1), x(i2), x(i3), y(i2), y(i3), y(i1)], axis=1)
    vx = np.stack([one, u - 1, -u, v, -v, zero], axis=1)
    # y: v̂1y - v̂2y - u (v̂3y - v̂2y) + v (v̂3x - v̂2x)
    cy = np.stack([y(i1), y(i2), y(i3), x(i2), x(i3), x(i1)], axis=1)
    vy = np.stack([one, u - 1, -u, -v, v, zero], axis=1)
    cols = np.stack([cx, cy], axis=1).reshape(-1, 6)
    vals = np.stack([vx, vy], axis=1).reshape(-1, 6)
    return RowBlock("similarity", cols, vals, np.zeros(len(cols)), weight)


NEIGHBOUR_OFFSETS = tuple((dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0))


def quad_neighbour_pairs(rows: int, cols: int) -> np.ndarray:
    """Ordered (i, j) quad-index pairs with j in the 8-neighbourhood of i."""
    r, c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    r, c = r.ravel(), c.ravel()
    pairs = []
    for dr, dc in NEIGHBOUR_OFFSETS:
        rr, cc = r + dr, c + dc
        ok = (rr >= 0) & (rr < rows) & (cc >= 0) & (cc < cols)
        pairs.append(np.stack([r * cols + c, rr * cols + cc], axis=1)[ok])
    pairs = np.concatenate(pairs)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def color_smoothness_rows(layout: UnknownLayout, weight: float = 1.0, samples=SMOOTHNESS_SAMPLES) -> RowBlock:
    """Rows (g_i x + b_i) - (g_j x + b_j) over ordered neighbour pairs, channels and samples."""
    pairs = quad_neighbour_pairs(layout.rows, layout.cols)
    xs = np.asarray(samples, dtype=np.float64)
    nch = layout.channels
    P, S = len(pairs), len(xs)
    ch = np.arange(nch)
    gi = layout.gain_col(pairs[:, 0:1], ch[None, :])  # (P, C)
    gj = layout.gain_col(pairs[:, 1:2], ch[None, :])
    cols = np.stack([gi, gi + 1, gj, gj + 1], axis=2)  # (P, C, 4)
    cols = np.broadcast_to(cols[:, :, None, :], (P, nch, S, 4)).reshape(-1, 4)
    xv = np.broadcast_to(xs[None, None, :], (P, nch, S))
    vals = np.stack([xv, np.ones_like(xv), -xv, -np.ones_like(xv)], axis=3).reshape(-1, 4)
    return RowBlock("color_smoothness", np.ascontiguousarray(cols), vals, np.zeros(len(cols)), weight)


def regularizer_rows(layout: UnknownLayout, overlap_quads, weight: float = 1.0) -> RowBlock:
    """Pull gain to 1 and bias to 0 for quads without photometric samples."""
    overlap = np.asarray(overlap_quads, dtype=bool).reshape(layout.rows, layout.cols)
    free = np.flatnonzero(~overlap.ravel())
    if len(free) == 0:
        return RowBlock.empty("regularizer", 1, weight)
    ch = np.arange(layout.channels)
    g = layout.gain_col(free[:, None], ch[None, :])
    cols = np.stack([g, g + 1], axis=2).reshape(-1, 1)
    const = np.tile(np.array([-1.0, 0.0]), len(free) * layout.channels)
    return RowBlock("regularizer", cols, np.ones((len(cols), 1)), const, weight)


def overlap_quads_from_points(layout: UnknownLayout, quads) -> np.ndarray:
    grid = np.zeros((layout.rows, layout.cols), dtype=bool)
    quads = np.asarray(quads, dtype=np.int64).reshape(-1, 2)
    grid[quads[:, 0], quads[:, 1]] = True
    return grid


def assemble(blocks, layout: UnknownLayout, state=None):
    """Normal equations (AᵀA, -Aᵀc) of the stacked weighted rows over free unknowns.

    ``state`` (full parameter vector) is required when the layout fixes some
    columns; their contribution is folded into the constants.
    """
    ridx = layout.reduced_index()
    n = layout.size
    rows_i, cols_i, vals_i, consts = [], [], [], []
    offset = 0
    for block in blocks:
        k = len(block)
        if k == 0 or block.weight == 0:
            continue
        cols = block.cols
        vals = block.vals * block.weight
        const = block.const * block.weight
        red = ridx[cols]
        fixed = red < 0
        if fixed.any():
            if state is None:
                raise ValueError("state is required when the layout has fixed columns")
            const = const + np.sum(np.where(fixed, vals * np.asarray(state)[cols], 0.0), axis=1)
        free = ~fixed
        r = np.broadcast_to(np.arange(offset, offset + k)[:, None], cols.shape)
        rows_i.append(r[free])
        cols_i.append(red[free])
        vals_i.append(vals[free])
        consts.append(const)
        offset += k
    if offset == 0:
        return sp.csr_matrix((n, n)), np.zeros(n)
    A = sp.csr_matrix(
        (np.concatenate(vals_i), (np.concatenate(rows_i), np.concatenate(cols_i))), shape=(offset, n)
    )
    c = np.concatenate(consts)
    AtA = (A.T @ A).tocsr()
    AtA = ((AtA + AtA.T) * 0.5).tocsr()
    AtA.sort_indices()
    return AtA, -(A.T @ c)


def total_energy(blocks, state) -> float:
    return float(sum(b.energy(state) for b in blocks))


def energy_report(blocks, state) -> dict:
    """Per-term row counts and energies, suitable for a JSON debug dump."""
    report = {}
    for b in blocks:
        entry = report.setdefault(b.name, {"rows": 0, "energy": 0.0})
        entry["rows"] += len(b)
        entry["energy"] += b.energy(state)
    return report
