"""Quality-aware point cloud losses, metrics, and fitting experiments."""

from .cloud import NNAssignment, PointCloud, as_cloud, build_spatial_index, nn_one_way
from .errors import (
    AssignmentUnstableError,
    CloudParseError,
    DivergedLossError,
    EmptyCloudError,
    InvalidParamsError,
    NonFiniteCoordinateError,
    PcqalError,
    SinglePointError,
    SizeMismatchError,
    TooLargeError,
)
from .fileio import read_cloud, report_csv, report_json, write_cloud, write_report
from .fit import FitResult, fit_points
from .losses import (
    EMD_EXACT_MAX_POINTS,
    GRAD_LOSSES,
    LossValue,
    QalParams,
    UncoveredMask,
    chamfer,
    coverage_weight,
    emd,
    loss_and_grad,
    loss_grad_check,
    qal,
    qal_attr_term,
    qal_cov_term,
    uncovered_mask,
)
from .metrics import (
    DEFAULT_TAU,
    AggregateReport,
    QualityReport,
    aggregate,
    coverage_at,
    evaluate_pairs,
    mean_nn_spacing,
    quality_report,
    spurious_at,
)
from .shapes import SHAPE_KINDS, ShapeSpec, generate_shape, generate_shape_labeled
from .sweep import ExperimentConfig, SweepReport, pareto_knee, run_ablation

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "PointCloud", "NNAssignment", "as_cloud", "nn_one_way", "build_spatial_index",
    "QalParams", "LossValue", "UncoveredMask", "coverage_weight", "qal",
    "qal_cov_term", "qal_attr_term", "uncovered_mask", "chamfer", "emd",
    "loss_and_grad", "loss_grad_check", "GRAD_LOSSES", "EMD_EXACT_MAX_POINTS",
    "QualityReport", "AggregateReport", "coverage_at", "spurious_at",
    "quality_report", "mean_nn_spacing", "evaluate_pairs", "aggregate",
    "DEFAULT_TAU",
    "ShapeSpec", "SHAPE_KINDS", "generate_shape", "generate_shape_labeled",
    "FitResult", "fit_points",
    "ExperimentConfig", "SweepReport", "run_ablation", "pareto_knee",
    "read_cloud", "write_cloud", "write_report", "report_json", "report_csv",
    "PcqalError", "EmptyCloudError", "SinglePointError", "NonFiniteCoordinateError",
    "InvalidParamsError", "SizeMismatchError", "TooLargeError",
    "AssignmentUnstableError", "DivergedLossError", "CloudParseError",
]
