"""Precision/recall of predicted matches against ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..conditioning import MatchSet
from ..features import GroundTruthMatches, KeypointSet


@dataclass
class MatchingMetrics:
    precision: float
    recall: float
    n_correct: int
    n_predicted: int
    n_gt: int


def matching_metrics(
    matches: MatchSet,
    gt: GroundTruthMatches,
    projected: np.ndarray | None = None,
    valid: np.ndarray | None = None,
    kps2: KeypointSet | None = None,
    radius: float = 3.0,
) -> MatchingMetrics:
    """Score predictions against the GT index pairs.

    A prediction counts as correct if it appears in the assignment, or, when
    reprojected positions are supplied, if its view-2 keypoint lies within
    radius of the reprojection of its view-1 keypoint. Empty predictions
    score precision 1 by convention; empty ground truth scores recall 1.
    """
    gt_set = {(int(i), int(j)) for i, j in gt.pairs}
    n_correct = 0
    for (i, j) in matches.indices:
        i, j = int(i), int(j)
        if (i, j) in gt_set:
            n_correct += 1
        elif projected is not None and valid is not None and kps2 is not None:
            if valid[i]:
                d = float(np.linalg.norm(projected[i] - kps2.points[j].astype(np.float64)))
                if d < radius:
                    n_correct += 1
    n_predicted = len(matches)
    n_gt = len(gt)
    precision = 1.0 if n_predicted == 0 else n_correct / n_predicted
    recall = 1.0 if n_gt == 0 else n_correct / n_gt
    return MatchingMetrics(precision, recall, n_correct, n_predicted, n_gt)
