"""Domain types for keypoints, descriptors, semantic maps, and ground truth.

Conventions used throughout the package:
  - pixel coordinates have their origin at the top-left pixel corner, so the
    center of pixel (i, j) is at (i + 0.5, j + 0.5);
  - arrays destined for disk are stored as little-endian float32, while
    intermediate math may run at float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


def _as_f32(values, name: str, shape_hint: tuple[int, ...] | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float32)
    if shape_hint is not None and arr.shape != shape_hint:
        raise ContractError(f"{name} has shape {arr.shape}, expected {shape_hint}")
    return arr


@dataclass
class KeypointSet:
    """Detected keypoints for one image: positions, scores, and image size."""

    points: np.ndarray  # (N, 2) float32, (x, y) pixels
    scores: np.ndarray  # (N,) float32, detection confidence in [0, 1]
    image_width: int
    image_height: int

    def __post_init__(self):
        self.points = np.atleast_2d(_as_f32(self.points, "points"))
        if self.points.size == 0:
            self.points = self.points.reshape(0, 2)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ContractError(f"points must be (N, 2), got {self.points.shape}")
        self.scores = _as_f32(self.scores, "scores").reshape(-1)
        n = self.points.shape[0]
        if self.scores.shape[0] != n:
            raise ContractError(f"{self.scores.shape[0]} scores for {n} points")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ContractError("image size must be positive")
        if not np.all(np.isfinite(self.points)) or not np.all(np.isfinite(self.scores)):
            raise ContractError("keypoints contain non-finite values")
        if n > 0:
            x, y = self.points[:, 0], self.points[:, 1]
            if x.min() < 0 or y.min() < 0 or x.max() >= self.image_width or y.max() >= self.image_height:
                raise ContractError("keypoints fall outside [0, W) x [0, H)")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class RawDescriptors:
    """Unrefined per-keypoint descriptors of a single modality."""

    matrix: np.ndarray  # (N, D_in)
    kind: str  # "texture" | "semantic"

    def __post_init__(self):
        self.matrix = np.atleast_2d(np.asarray(self.matrix))
        if self.kind not in ("texture", "semantic"):
            raise ContractError(f"unknown descriptor kind {self.kind!r}")
        if not np.all(np.isfinite(self.matrix)):
            raise ContractError("descriptors contain non-finite values")

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass
class DenseSemanticMap:
    """Dense high-level feature grid covering a source image of (W, H) pixels."""

    grid: np.ndarray  # (H', W', C)
    image_width: int
    image_height: int

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        if self.grid.ndim != 3 or min(self.grid.shape) < 1:
            raise ContractError(f"semantic grid must be (H', W', C) with all dims >= 1, got {self.grid.shape}")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ContractError("source image size must be positive")
        if not np.all(np.isfinite(self.grid)):
            raise ContractError("semantic grid contains non-finite values")

    @property
    def grid_height(self) -> int:
        return self.grid.shape[0]

    @property
    def grid_width(self) -> int:
        return self.grid.shape[1]

    @property
    def channels(self) -> int:
        return self.grid.shape[2]


@dataclass
class ImageFeatures:
    """Everything extracted from one image before refinement."""

    keypoints: KeypointSet
    texture: RawDescriptors
    semantic_map: DenseSemanticMap

    def __post_init__(self):
        if self.texture.kind != "texture":
            raise ContractError("ImageFeatures.texture must hold texture descriptors")
        if len(self.texture) != len(self.keypoints):
            raise ContractError(
                f"{len(self.texture)} texture descriptors for {len(self.keypoints)} keypoints"
            )
        if (self.semantic_map.image_width, self.semantic_map.image_height) != (
            self.keypoints.image_width,
            self.keypoints.image_height,
        ):
            raise ContractError("semantic map and keypoints reference different image sizes")


UNIT_NORM_TOL = 1e-5


@dataclass
class RefinedFeatures:
    """Refined texture/semantic descriptor pair, each row on the unit sphere."""

    keypoints: KeypointSet
    d_t: np.ndarray  # (N, d) float32
    d_s: np.ndarray  # (N, d) float32

    def __post_init__(self):
        self.d_t = _as_f32(self.d_t, "d_t")
        self.d_s = _as_f32(self.d_s, "d_s")
        n = len(self.keypoints)
        if (
            self.d_t.ndim != 2
            or self.d_t.shape != self.d_s.shape
            or self.d_t.shape[0] != n
        ):
            raise ContractError(
                f"descriptor shapes {self.d_t.shape}/{self.d_s.shape} disagree with {n} keypoints"
            )
        if n > 0:
            for name, mat in (("d_t", self.d_t), ("d_s", self.d_s)):
                norms = np.linalg.norm(mat.astype(np.float64), axis=1)
                if np.max(np.abs(norms - 1.0)) > UNIT_NORM_TOL:
                    raise ContractError(f"{name} rows are not unit-norm within {UNIT_NORM_TOL}")

    @property
    def dim(self) -> int:
        return self.d_t.shape[1]

    def __len__(self) -> int:
        return len(self.keypoints)


@dataclass
class GroundTruthMatches:
    """One-to-one index pairs linking keypoints of two views."""

    pairs: np.ndarray  # (M, 2) int64

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        if len(self.pairs) > 0:
            if self.pairs.min() < 0:
                raise ContractError("ground-truth indices must be non-negative")
            for col in (0, 1):
                if len(np.unique(self.pairs[:, col])) != len(self.pairs):
                    raise ContractError("ground-truth matches must be one-to-one")

    def __len__(self) -> int:
        return self.pairs.shape[0]


@dataclass
class SyntheticScenePair:
    """A generated two-view scene with ground truth known by construction."""

    view1: ImageFeatures
    view2: ImageFeatures
    gt: GroundTruthMatches
    regions1: np.ndarray  # (N1,) int64, semantic region id per keypoint
    regions2: np.ndarray  # (N2,) int64
    prototypes: np.ndarray = field(repr=False)  # (R, C) float32, orthonormal rows

    def __post_init__(self):
        self.regions1 = np.asarray(self.regions1, dtype=np.int64)
        self.regions2 = np.asarray(self.regions2, dtype=np.int64)
        if len(self.regions1) != len(self.view1.keypoints):
            raise ContractError("regions1 length mismatch")
        if len(self.regions2) != len(self.view2.keypoints):
            raise ContractError("regions2 length mismatch")
        if len(self.gt) > 0:
            if self.gt.pairs[:, 0].max() >= len(self.view1.keypoints):
                raise ContractError("gt index out of range for view1")
            if self.gt.pairs[:, 1].max() >= len(self.view2.keypoints):
                raise ContractError("gt index out of range for view2")
