"""Command-line entry point: stitch, eval, synth, synth-curve, ablate.

Exit codes: 0 success, 1 usage error, 2 degenerate or invalid input,
3 internal failure.  Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from ._atomic import atomic_write_text
from .color_model import model_to_dict
from .errors import DegenerateInputError, SchemaError
from .homography import estimate_ransac
from .imaging import load_image, save_image
from .io_formats import CorrespondenceSet, dump_json, load_correspondences, load_json
from .matching import simple_match
from .mesh_warp import mesh_from_dict, mesh_to_dict, warp_render
from .metrics import alignment_error
from .pipeline import VARIANTS, StitchConfig, evaluate, stitch
from .synth import MAX_DEGREE, WarpField, make_base, make_pair, write_pair

logger = logging.getLogger("gcpw")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
THREADS_ENV = "GCPW_THREADS"
PAIR_PREFIX = "deg_"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _thread_limit():
    """Cap BLAS/OpenMP pools when GCPW_THREADS is set (needs threadpoolctl)."""
    value = os.environ.get(THREADS_ENV)
    if not value:
        return contextlib.nullcontext()
    try:
        n = int(value)
    except ValueError:
        raise SchemaError(f"{THREADS_ENV} must be an integer, got {value!r}") from None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        logger.warning("%s set but threadpoolctl is not installed; ignoring", THREADS_ENV)
        return contextlib.nullcontext()
    return threadpool_limits(limits=max(n, 1))


def _load_config(path, seed=None) -> StitchConfig:
    cfg = StitchConfig.from_dict(load_json(path)) if path else StitchConfig()
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    return cfg


def _load_variants(path) -> dict:
    if not path:
        return dict(VARIANTS)
    doc = load_json(path)
    if not isinstance(doc, dict) or not all(isinstance(v, dict) for v in doc.values()):
        raise SchemaError(f"{path}: variants must map names to config overrides")
    return doc


def parse_degrees(text: str) -> list[int]:
    """``"1..16"``, ``"0,8,16"`` or a single integer."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 0 or max(out) > MAX_DEGREE:
        raise SchemaError(f"degrees must lie in 0..{MAX_DEGREE}, got {text!r}")
    return sorted(set(out))


def _correspondences(args, I1, I2) -> CorrespondenceSet:
    if args.corr:
        return load_correspondences(args.corr)
    logger.info("no --corr given; running the built-in corner matcher")
    return simple_match(I1, I2)


def cmd_stitch(args) -> int:
    I1, I2 = load_image(args.i1), load_image(args.i2)
    config = _load_config(args.config, args.seed)
    corr = _correspondences(args, I1, I2)
    result = stitch(I1, I2, corr, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / "panorama.png", result.panorama, bit_depth=8, alpha=True)
    save_image(out / "i_s.png", result.alignment.source, bit_depth=16, alpha=True)
    save_image(out / "i_t.png", result.alignment.target, bit_depth=16, alpha=True)
    dump_json(out / "mesh.json", mesh_to_dict(result.mesh))
    dump_json(out / "color_model.json", model_to_dict(result.model))
    dump_json(out / "log.json", {
        "version": __version__,
        "config": config.to_dict(),
        "homography": result.alignment.homography.to_list(),
        "canvas_offset": result.alignment.offset,
        "inliers": result.inliers,
        "foldovers": result.foldovers,
        "iterations": result.log,
    })
    print(f"stitched {args.i1} + {args.i2} -> {out} ({len(result.log)} iterations)")
    return EXIT_OK


def cmd_eval(args) -> int:
    src, tgt = load_image(args.i1), load_image(args.i2)
    mesh = mesh_from_dict(load_json(args.mesh))
    if (src.height, src.width) != (tgt.height, tgt.width):
        raise DegenerateInputError(f"canvas mismatch: {src.width}x{src.height} vs {tgt.width}x{tgt.height}")
    warped, _ = warp_render(src, mesh, (tgt.height, tgt.width))
    report = alignment_error(warped, tgt)
    dump_json(args.out, report.to_dict())
    print(f"alignment error {report.scaled:.4f} (raw {report.raw:.6f}, {report.pixel_count} px)")
    return EXIT_OK


def cmd_synth(args) -> int:
    degrees = parse_degrees(args.degrees)
    spec = load_json(args.warp) if args.warp else {}
    if not isinstance(spec, dict):
        raise SchemaError("warp config must be a JSON object")
    spec = dict(spec)
    size = tuple(spec.pop("size", (320, 240)))
    origin = tuple(spec.pop("origin", (40, 40)))
    extra = {k: spec.pop(k) for k in ("n_points", "n_lines", "point_noise") if k in spec}
    try:
        field = WarpField.from_dict(spec)
    except TypeError as exc:
        raise SchemaError(f"warp config: {exc}") from exc
    if args.base:
        base = load_image(args.base)
    else:
        w, h = args.base_size
        base = make_base(w, h, seed=args.base_seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / "warp.json", {**field.to_dict(), "size": size, "origin": origin, **extra})
    for d in degrees:
        pair = make_pair(base, field, d, seed=args.seed, size=size, origin=origin, **extra)
        write_pair(out / f"{PAIR_PREFIX}{d:02d}", pair)
    print(f"wrote {len(degrees)} pair(s) to {out}")
    return EXIT_OK


def _pair_dirs(root: Path) -> list[tuple[int, Path]]:
    found = []
    for p in sorted(root.glob(f"{PAIR_PREFIX}*")):
        if p.is_dir() and (p / "i1.png").exists():
            found.append((int(load_json(p / "degradation.json")["degree"]), p))
    if not found:
        raise DegenerateInputError(f"no synthetic pairs under {root}")
    return sorted(found)


def run_variants(I1, I2, corr, config: StitchConfig, variants: dict, eval_source=None) -> dict:
    """Stitch once per variant and evaluate each; the homography is shared."""
    if config.homography is None and len(corr.points) >= 4 and corr.frame == "input":
        H, _ = estimate_ransac(corr.src_points, corr.dst_points, config.ransac_threshold,
                               config.ransac_iterations, config.seed)
        config = config.replace(homography=H.to_list())
    reports = {}
    for name, overrides in variants.items():
        result = stitch(I1, I2, corr, config.replace(**overrides))
        reports[name] = evaluate(result, eval_source).to_dict()
    return reports


def _curve_case(task):
    degree, pair_dir, config, variants = task
    I1 = load_image(pair_dir / "i1.png")
    I2 = load_image(pair_dir / "i2.png")
    clean = load_image(pair_dir / "i1_clean.png")
    corr = load_correspondences(pair_dir / "correspondences.json")
    return degree, run_variants(I1, I2, corr, config, variants, clean)


def cmd_synth_curve(args) -> int:
    config = _load_config(args.config, args.seed)
    variants = _load_variants(args.variants)
    tasks = [(d, p, config, variants) for d, p in _pair_dirs(Path(args.dir))]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_curve_case, tasks))
    else:
        rows = [_curve_case(t) for t in tasks]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["degree", "variant", "scaled", "raw", "pixel_count"])
    for degree, reports in rows:
        for name, rep in reports.items():
            writer.writerow([degree, name, repr(rep["scaled"]), repr(rep["raw"]), rep["pixel_count"]])
    atomic_write_text(args.out, buf.getvalue())
    print(buf.getvalue(), end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    I1, I2 = load_image(args.i1), load_image(args.i2)
    config = _load_config(args.config, args.seed)
    variants = _load_variants(args.variants)
    corr = _correspondences(args, I1, I2)
    eval_source = load_image(args.eval_i1) if args.eval_i1 else None
    reports = run_variants(I1, I2, corr, config, variants, eval_source)
    dump_json(args.out, reports)
    for name, rep in reports.items():
        print(f"{name:>16s}  {rep['scaled']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gcpw", description="Grid-mesh stitching with a local colour model.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stitch", help="stitch two images")
    p.add_argument("--i1", required=True, help="source image (warped)")
    p.add_argument("--i2", required=True, help="target image (reference)")
    p.add_argument("--corr", help="correspondence JSON; corner matching is used if omitted")
    p.add_argument("--config", help="StitchConfig JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("eval", help="alignment error of a mesh on canvas-frame images")
    p.add_argument("--i1", required=True, help="canvas-frame source (e.g. i_s.png from stitch)")
    p.add_argument("--i2", required=True, help="canvas-frame target (e.g. i_t.png from stitch)")
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", required=True, help="report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a family of synthetic pairs")
    p.add_argument("--base", help="base image; a procedural texture is used if omitted")
    p.add_argument("--base-seed", type=int, default=0)
    p.add_argument("--base-size", type=int, nargs=2, default=(480, 360), metavar=("W", "H"))
    p.add_argument("--degrees", default="1..16")
    p.add_argument("--warp", help="warp JSON: homography, amplitude, period, phase_x, phase_y, size, origin")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("synth-curve", help="error-vs-degree table over a synth directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--config")
    p.add_argument("--variants", help="JSON mapping variant names to config overrides")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth_curve)

    p = sub.add_parser("ablate", help="compare method variants on one pair")
    p.add_argument("--i1", required=True)
    p.add_argument("--i2", required=True)
    p.add_argument("--corr")
    p.add_argument("--config")
    p.add_argument("--variants", help="JSON mapping variant names to config overrides")
    p.add_argument("--eval-i1", help="evaluate on this copy of I1 (e.g. undegraded)")
    p.add_argument("--out", required=True, help="report JSON")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        with _thread_limit():
            return args.func(args)
    except (DegenerateInputError, SchemaError, FileNotFoundError) as exc:
        print(f"gcpw {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        logger.debug("internal failure", exc_info=True)
        print(f"gcpw {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
