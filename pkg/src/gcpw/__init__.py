"""Joint mesh warping and local colour modelling for two-image stitching."""

from .color_model import ColorModel, identity_model, pairwise_smoothness
from .errors import DegenerateInputError, GCPWError, SchemaError, SolverError
from .homography import Homography, estimate_dlt, estimate_ransac, rough_align
from .imaging import MultiChannelImage, build_pyramid, load_image, save_image, to_ycbcr
from .io_formats import CorrespondenceSet, load_correspondences, save_correspondences
from .mesh_warp import GridMesh, build_uniform_mesh, warp_render
from .metrics import alignment_error
from .pipeline import StitchConfig, StitchResult, stitch

__version__ = "0.1.0"

__all__ = [
    "ColorModel", "identity_model", "pairwise_smoothness",
    "DegenerateInputError", "GCPWError", "SchemaError", "SolverError",
    "Homography", "estimate_dlt", "estimate_ransac", "rough_align",
    "MultiChannelImage", "build_pyramid", "load_image", "save_image", "to_ycbcr",
    "CorrespondenceSet", "load_correspondences", "save_correspondences",
    "GridMesh", "build_uniform_mesh", "warp_render",
    "alignment_error",
    "StitchConfig", "StitchResult", "stitch",
]
