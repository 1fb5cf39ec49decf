"""Joint radial undistortion and affine rectification from repeated coplanar patterns."""

from .errors import (
    Degenerate,
    EstimationFailed,
    InsufficientData,
    NoRealRoot,
    OptimizerDiverged,
    RDCTError,
    SchemaError,
    SolverFailed,
)
from .geometry import (
    ConjugateTranslation,
    DivisionModel,
    Gauge,
    NormalizationFrame,
    VanishingLine,
    distort,
    rectifying_homography,
    undistort,
)
from .metrics import GridTessellation, GroundTruthCamera, transfer_error, warp_error
from .ransac import AppearanceCluster, RansacConfig, RectificationEstimate, lo_ransac, simple_ransac_25
from .solvers import ModelHypothesis, SolverKind, run_solver

__version__ = "0.1.0"

__all__ = [
    "AppearanceCluster",
    "ConjugateTranslation",
    "Degenerate",
    "DivisionModel",
    "EstimationFailed",
    "Gauge",
    "GridTessellation",
    "GroundTruthCamera",
    "InsufficientData",
    "ModelHypothesis",
    "NoRealRoot",
    "NormalizationFrame",
    "OptimizerDiverged",
    "RDCTError",
    "RansacConfig",
    "RectificationEstimate",
    "SchemaError",
    "SolverFailed",
    "SolverKind",
    "VanishingLine",
    "distort",
    "lo_ransac",
    "rectifying_homography",
    "run_solver",
    "simple_ransac_25",
    "transfer_error",
    "undistort",
    "warp_error",
]
