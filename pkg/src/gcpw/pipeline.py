"""Coarse-to-fine joint estimation of the warped mesh and the local colour model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import energy
from .color_model import ColorModel, identity_model
from .energy import RowBlock, TermWeights, UnknownLayout
from .errors import DegenerateInputError, SchemaError, SolverError
from .homography import (RANSAC_ITERATIONS, RANSAC_SEED, RANSAC_THRESHOLD, Homography, RoughAlignment,
                         estimate_ransac, rough_align, warp_homography)
from .imaging import MultiChannelImage, build_pyramid, from_ycbcr, to_ycbcr
from .io_formats import CorrespondenceSet
from .metrics import AlignmentReport, alignment_error
from .mesh_warp import GridMesh, build_uniform_mesh, locate_points, warp_points, warp_render
from .solver import solve

logger = logging.getLogger(__name__)


@dataclass
class StitchConfig:
    mesh_rows: int = 32
    mesh_cols: int = 32
    lambda_photometric: float = 100.0
    lambda_geometric: float = 1.0
    lambda_similarity: float = 0.5
    lambda_color: float = 1.0
    lambda_line: float | None = None  # None: same as lambda_geometric
    init_photometric_weight: float = 1.0
    sample_interval: int = 3
    line_interval: float = 5.0
    pyramid_levels: int = 3
    displacement_threshold: float = 0.5
    max_iterations: int = 20
    solver_tol: float = 1e-8
    solver_max_iter: int | None = None
    ransac_threshold: float = RANSAC_THRESHOLD
    ransac_iterations: int = RANSAC_ITERATIONS
    seed: int = RANSAC_SEED
    solve_color: bool = True
    initialize_color: bool = True
    resample_each_iteration: bool = True
    homography: list[float] | None = None
    apply_color_model: bool = False

    def __post_init__(self):
        for name in ("mesh_rows", "mesh_cols", "sample_interval", "pyramid_levels", "max_iterations",
                     "ransac_iterations"):
            if int(getattr(self, name)) < 1:
                raise SchemaError(f"{name} must be a positive count")
        for name in ("lambda_photometric", "lambda_geometric", "lambda_similarity", "lambda_color",
                     "init_photometric_weight"):
            if getattr(self, name) < 0:
                raise SchemaError(f"{name} must be nonnegative")
        if self.lambda_line is not None and self.lambda_line < 0:
            raise SchemaError("lambda_line must be nonnegative")
        for name in ("line_interval", "displacement_threshold", "solver_tol", "ransac_threshold"):
            if not getattr(self, name) > 0:
                raise SchemaError(f"{name} must be positive")
        if self.solver_max_iter is not None and self.solver_max_iter < 1:
            raise SchemaError("solver_max_iter must be positive")
        if self.homography is not None and len(self.homography) != 9:
            raise SchemaError("homography must list 9 numbers")

    @property
    def weights(self) -> TermWeights:
        return TermWeights(self.lambda_photometric, self.lambda_geometric, self.lambda_similarity,
                           self.lambda_color, self.lambda_line)

    @classmethod
    def from_dict(cls, d: dict) -> "StitchConfig":
        if not isinstance(d, dict):
            raise SchemaError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise SchemaError(f"unknown config field(s): {unknown}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise SchemaError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **overrides) -> "StitchConfig":
        d = self.to_dict()
        d.update(overrides)
        return StitchConfig.from_dict(d)


# Method variants compared by the evaluation commands.
VARIANTS = {
    "gcpw": {},
    "geometric": {"lambda_photometric": 0.0},
    "identity_color": {"solve_color": False, "initialize_color": False},
}


@dataclass
class LevelData:
    """Correspondences expressed in one pyramid level's canvas pixels."""

    src_points: np.ndarray
    dst_points: np.ndarray
    src_lines: np.ndarray
    dst_lines: np.ndarray

    def scaled(self, f: float) -> "LevelData":
        return LevelData(self.src_points * f, self.dst_points * f, self.src_lines * f, self.dst_lines * f)

    @classmethod
    def empty(cls) -> "LevelData":
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 2, 2)), np.zeros((0, 2, 2)))


@dataclass
class StitchResult:
    panorama: MultiChannelImage
    mesh: GridMesh
    model: ColorModel
    log: list[dict]
    foldovers: list[int]
    alignment: RoughAlignment
    warped_source: MultiChannelImage
    inliers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


def source_grid(I_s: MultiChannelImage, interval: int) -> np.ndarray:
    """Stride grid of (x, y) points where the source raster is valid, row-major."""
    ys, xs = np.mgrid[0:I_s.height:interval, 0:I_s.width:interval]
    xs, ys = xs.ravel(), ys.ravel()
    keep = I_s.mask[ys, xs]
    return np.column_stack([xs[keep], ys[keep]]).astype(np.float64)


def _solve_blocks(M, rhs, state, layout: UnknownLayout, config: StitchConfig):
    """Solve for the step from ``state`` and return (new_state, solver result)."""
    free = layout.free_mask()
    x_cur = state[free]
    step = solve(M, rhs - M @ x_cur, tol=config.solver_tol, max_iter=config.solver_max_iter)
    new_state = state.copy()
    new_state[free] = x_cur + step.x
    return new_state, step


def initialize_color(I_s: MultiChannelImage, I_t: MultiChannelImage, mesh: GridMesh,
                     config: StitchConfig, points=None) -> ColorModel:
    """Colour model minimising photometric + smoothness + regulariser at fixed mesh."""
    layout = UnknownLayout(mesh.rows, mesh.cols, I_s.channels, solve_vertices=False, solve_color=True)
    if points is None:
        points = source_grid(I_s, config.sample_interval)
    photo = energy.photometric_rows(points, I_s, I_t, layout, mesh, math.sqrt(config.init_photometric_weight))
    model = identity_model(mesh.rows, mesh.cols, I_s.channels)
    if len(photo) == 0:
        logger.warning("no overlap samples; keeping the identity colour model")
        return model
    overlap = energy.overlap_quads_from_points(layout, photo.meta["quads"])
    blocks = [
        photo,
        energy.color_smoothness_rows(layout, 1.0),
        energy.regularizer_rows(layout, overlap, 1.0),
    ]
    state = layout.pack(mesh, model)
    M, rhs = energy.assemble(blocks, layout, state)
    new_state, step = _solve_blocks(M, rhs, state, layout, config)
    if not step.converged:
        logger.warning("colour initialisation solve stopped at relative residual %.3g", step.relative_residual)
    _, gains, biases = layout.unpack(new_state)
    return ColorModel(gains, biases)


def _static_blocks(mesh: GridMesh, layout: UnknownLayout, corr: LevelData, config: StitchConfig) -> list[RowBlock]:
    w = config.weights
    blocks = []
    if len(corr.src_points):
        blocks.append(energy.point_rows(corr.src_points, corr.dst_points, layout, mesh, math.sqrt(w.geometric)))
    if len(corr.src_lines):
        blocks.append(energy.line_rows(corr.src_lines, corr.dst_lines, layout, mesh, config.line_interval,
                                       math.sqrt(w.line_weight)))
    blocks.append(energy.similarity_rows(mesh, layout, math.sqrt(w.similarity)))
    if layout.solve_color and w.color > 0:
        blocks.append(energy.color_smoothness_rows(layout, math.sqrt(w.color)))
    return blocks


def optimize_level(I_s: MultiChannelImage, I_t: MultiChannelImage, mesh: GridMesh, model: ColorModel,
                   corr: LevelData, config: StitchConfig, level: int = 0):
    """Gauss-Newton loop on the joint objective at one pyramid level.

    Each outer iteration relinearises the photometric term at the current mesh,
    solves for all free unknowns and stops once no vertex moves by more than
    ``config.displacement_threshold`` pixels (of this level).
    """
    layout = UnknownLayout(mesh.rows, mesh.cols, I_s.channels, solve_vertices=True,
                           solve_color=config.solve_color)
    w = config.weights
    static = _static_blocks(mesh, layout, corr, config)
    state = layout.pack(mesh, model)
    M_static, rhs_static = energy.assemble(static, layout, state)
    candidates = source_grid(I_s, config.sample_interval)
    photo_weight = math.sqrt(w.photometric)
    log = []
    for it in range(config.max_iterations):
        blocks = list(static)
        if w.photometric > 0:
            photo = energy.photometric_rows(candidates, I_s, I_t, layout, mesh, photo_weight)
            if not config.resample_each_iteration and it == 0:
                candidates = photo.meta["points"]
            blocks.insert(0, photo)
            M_p, rhs_p = energy.assemble([photo], layout, state)
            M, rhs = M_static + M_p, rhs_static + rhs_p
        else:
            photo = None
            M, rhs = M_static, rhs_static
        try:
            new_state, step = _solve_blocks(M, rhs, state, layout, config)
        except SolverError:
            logger.error("solver failed at level %d iteration %d", level, it)
            raise
        before = energy.total_energy(blocks, state)
        after = energy.total_energy(blocks, new_state)
        warped, gains, biases = layout.unpack(new_state)
        new_mesh = mesh.with_warped(warped)
        disp = new_mesh.max_displacement(mesh)
        log.append({
            "level": level,
            "iteration": it,
            "samples": 0 if photo is None else len(photo.meta["points"]),
            "terms": energy.energy_report(blocks, new_state),
            "linearized_before": before,
            "linearized_after": after,
            "max_displacement": disp,
            "solver_iterations": step.iterations,
            "solver_converged": bool(step.converged),
            "solver_residual": step.relative_residual,
        })
        logger.debug("level %d it %d: E %.6g -> %.6g, max disp %.4f, cg %d",
                     level, it, before, after, disp, step.iterations)
        mesh, state = new_mesh, new_state
        model = ColorModel(gains, biases)
        if disp < config.displacement_threshold:
            break
    return mesh, model, log


def canvas_correspondences(corr: CorrespondenceSet, alignment: RoughAlignment,
                           inliers=None) -> LevelData:
    if corr.frame == "canvas":
        pts = corr.points
        return LevelData(pts[:, 0:2].copy(), pts[:, 2:4].copy(), corr.lines[:, 0].copy(), corr.lines[:, 1].copy())
    pts = corr.points if inliers is None else corr.points[inliers]
    src = alignment.source_to_canvas(pts[:, 0:2]) if len(pts) else np.zeros((0, 2))
    dst = alignment.target_to_canvas(pts[:, 2:4]) if len(pts) else np.zeros((0, 2))
    if len(corr.lines):
        ls = alignment.source_to_canvas(corr.lines[:, 0].reshape(-1, 2)).reshape(-1, 2, 2)
        lt = alignment.target_to_canvas(corr.lines[:, 1].reshape(-1, 2)).reshape(-1, 2, 2)
    else:
        ls = lt = np.zeros((0, 2, 2))
    return LevelData(src, dst, ls, lt)


def resolve_homography(corr: CorrespondenceSet, config: StitchConfig):
    if config.homography is not None:
        return Homography.from_list(config.homography), None
    if corr.frame == "canvas":
        raise DegenerateInputError("canvas-frame correspondences need an explicit homography in the config")
    if len(corr.points) < 4:
        raise DegenerateInputError("need at least 4 point matches to estimate the global homography")
    return estimate_ransac(corr.src_points, corr.dst_points, config.ransac_threshold,
                           config.ransac_iterations, config.seed)


def blend_average(a: MultiChannelImage, b: MultiChannelImage) -> MultiChannelImage:
    """Mean where both are valid, the single valid source elsewhere."""
    both = a.mask & b.mask
    data = np.where(a.mask[:, :, None], a.data, 0.0) + np.where(b.mask[:, :, None], b.data, 0.0)
    data = np.where(both[:, :, None], data * 0.5, data)
    return MultiChannelImage(data, a.mask | b.mask)


def apply_color_model(src_rgb: MultiChannelImage, mesh: GridMesh, model: ColorModel) -> MultiChannelImage:
    """Colour-correct the source in its own frame, clamped, for visualisation."""
    ycc = to_ycbcr(src_rgb)
    ys, xs = np.mgrid[0:src_rgb.height, 0:src_rgb.width]
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    quads, _, _ = locate_points(mesh, pts)
    g = model.gains[quads[:, 0], quads[:, 1]]
    b = model.biases[quads[:, 0], quads[:, 1]]
    out = (g * ycc.data.reshape(-1, 3) + b).reshape(ycc.data.shape)
    rgb = from_ycbcr(MultiChannelImage(out, ycc.mask))
    return MultiChannelImage(np.clip(rgb.data, 0.0, 1.0), rgb.mask)


def run_levels(I_s: MultiChannelImage, I_t: MultiChannelImage, corr: LevelData, config: StitchConfig):
    """Coarse-to-fine optimisation on already rough-aligned images (any colour space).

    Returns ``(mesh, model, log)`` at full resolution.
    """
    levels = config.pyramid_levels
    pyr_s = build_pyramid(I_s, levels)
    pyr_t = build_pyramid(I_t, levels)
    base = build_uniform_mesh(I_s.width, I_s.height, config.mesh_rows, config.mesh_cols)
    model = identity_model(config.mesh_rows, config.mesh_cols, I_s.channels)
    log: list[dict] = []
    warped = None
    for level in range(levels - 1, -1, -1):
        f = 0.5 ** level
        mesh = base.scaled(f)
        if warped is not None:
            mesh = mesh.with_warped(warped * 2.0)
        ls, lt = pyr_s[level], pyr_t[level]
        if level == levels - 1 and config.solve_color and config.initialize_color:
            model = initialize_color(ls, lt, mesh, config)
        mesh, model, level_log = optimize_level(ls, lt, mesh, model, corr.scaled(f), config, level)
        log.extend(level_log)
        warped = mesh.warped
    return mesh, model, log


def stitch(I1: MultiChannelImage, I2: MultiChannelImage, corr: CorrespondenceSet | None = None,
           config: StitchConfig | None = None) -> StitchResult:
    config = config or StitchConfig()
    corr = corr or CorrespondenceSet()
    if I1.channels != I2.channels:
        raise DegenerateInputError("input images have different channel counts")
    H, inliers = resolve_homography(corr, config)
    alignment = rough_align(I1, I2, H)
    level_corr = canvas_correspondences(corr, alignment, inliers)
    if alignment.source.channels == 3:
        ys, yt = to_ycbcr(alignment.source), to_ycbcr(alignment.target)
    else:
        ys, yt = alignment.source, alignment.target
    mesh, model, log = run_levels(ys, yt, level_corr, config)

    source = alignment.source
    if config.apply_color_model and source.channels == 3:
        source = apply_color_model(source, mesh, model)
    canvas = (alignment.source.height, alignment.source.width)
    warped, folded = warp_render(source, mesh, canvas)
    if folded:
        logger.warning("%d warped triangle(s) folded over", len(folded))
    panorama = blend_average(warped, alignment.target)
    return StitchResult(
        panorama=panorama,
        mesh=mesh,
        model=model,
        log=log,
        foldovers=folded,
        alignment=alignment,
        warped_source=warped,
        inliers=np.arange(len(corr.points)) if inliers is None else np.asarray(inliers),
    )


def render_with_mesh(src: MultiChannelImage, mesh: GridMesh) -> MultiChannelImage:
    """Warp a canvas-frame image with an optimised mesh (used for evaluation)."""
    img, _ = warp_render(src, mesh, (src.height, src.width))
    return img


def evaluate(result: StitchResult, source: MultiChannelImage | None = None) -> AlignmentReport:
    """Alignment error of ``result``'s mesh, optionally on a substitute first image.

    ``source`` is given in I1 coordinates (e.g. an undegraded copy of I1); it is
    pushed through the same rough alignment before the mesh warp.
    """
    canvas = (result.alignment.target.height, result.alignment.target.width)
    if source is None:
        src = result.alignment.source
    else:
        src = warp_homography(source, result.alignment.to_canvas, canvas)
    warped, _ = warp_render(src, result.mesh, canvas)
    return alignment_error(warped, result.alignment.target)


def true_offset_error(mesh: GridMesh, points, truth_map) -> np.ndarray:
    """|q̂ - truth(q)| for canvas points q, given a callable truth map in canvas coords."""
    q = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.linalg.norm(warp_points(mesh, q) - truth_map(q), axis=1)


__all__ = [
    "StitchConfig",
    "StitchResult",
    "VARIANTS",
    "LevelData",
    "initialize_color",
    "optimize_level",
    "run_levels",
    "stitch",
    "blend_average",
    "render_with_mesh",
    "evaluate",
]
