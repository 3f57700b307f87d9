"""Ground-truth labeling, supervision losses, metrics, and the training loop."""

from ..features import GroundTruthMatches
from .geometry import (
    Intrinsics,
    ViewGeometry,
    gt_assignment,
    load_geometry_sidecar,
    project_keypoints,
    relative_pose,
    save_geometry_sidecar,
)
from .loss import deep_loss, dual_softmax_loss
from .metrics import MatchingMetrics, matching_metrics
from .train import (
    StepMetrics,
    TrainConfig,
    TrainResult,
    holdout_precision,
    train,
    write_metrics_csv,
)

__all__ = [
    "GroundTruthMatches",
    "Intrinsics",
    "MatchingMetrics",
    "StepMetrics",
    "TrainConfig",
    "TrainResult",
    "ViewGeometry",
    "deep_loss",
    "dual_softmax_loss",
    "gt_assignment",
    "holdout_precision",
    "load_geometry_sidecar",
    "matching_metrics",
    "project_keypoints",
    "relative_pose",
    "save_geometry_sidecar",
    "train",
    "write_metrics_csv",
]
