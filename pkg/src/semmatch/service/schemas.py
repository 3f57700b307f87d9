"""Request/response models of the HTTP service.

Paths in requests are interpreted on the service host; the CLI and service
are expected to share a filesystem (single-workstation deployment).
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class RunConfigModel(BaseModel):
    weights: str
    cache_root: str
    dim: int = 256
    n_layers: int = 5
    heads: int = 4
    max_keypoints: int = 2048
    gt_radius: float = 3.0
    min_score: float = 0.0
    seed: int = 0


class ExtractRequest(BaseModel):
    files: list[str]
    config: RunConfigModel
    jobs: int = Field(default=1, ge=1, le=64)


class FileExtractResult(BaseModel):
    file: str
    key: Optional[str] = None
    n_keypoints: Optional[int] = None
    cache_hit: Optional[bool] = None
    timings: dict[str, float] = Field(default_factory=dict)
    error: Optional[str] = None


class ExtractResponse(BaseModel):
    results: list[FileExtractResult]
    n_failed: int


class MatchPairSpec(BaseModel):
    name: str
    a: str
    b: str


class MatchRequest(BaseModel):
    pairs: list[MatchPairSpec]
    config: RunConfigModel
    out_dir: str
    texture_only: bool = False
    jobs: int = Field(default=1, ge=1, le=64)


class PairMatchResult(BaseModel):
    name: str
    match_file: Optional[str] = None
    n_matches: Optional[int] = None
    key_a: Optional[str] = None
    key_b: Optional[str] = None
    error: Optional[str] = None


class MatchResponse(BaseModel):
    results: list[PairMatchResult]
    n_failed: int


class EvalPairSpec(BaseModel):
    name: str
    a: str
    b: str
    matches: str
    geometry: str


class EvalRequest(BaseModel):
    pairs: list[EvalPairSpec]
    config: RunConfigModel
    out_csv: str
    out_json: str
    # Sampson-distance thresholds (normalized coordinates) swept per pair;
    # the reported figures use the best threshold by pose AUC@5.
    sampson_thresholds: list[float] = Field(default_factory=lambda: [1e-3])


class PairEvalResult(BaseModel):
    name: str
    status: str
    n_matches: int
    precision: float
    recall: float
    rotation_error_deg: float
    translation_error_deg: float
    pose_error_deg: float


class EvalResponse(BaseModel):
    pairs: list[PairEvalResult]
    auc: dict[str, float]
    mean_precision: float
    mean_recall: float
    n_pairs: int
    n_gt_empty: int
    n_pose_failed: int
    sampson_threshold: float
    threshold_sweep: dict[str, float]  # threshold -> AUC@5
    out_csv: str
    out_json: str


class GeneratorConfigModel(BaseModel):
    n_keypoints: int = 256
    n_regions: int = 8
    texture_dim: int = 32
    semantic_channels: int = 64
    noise: float = 0.05
    dropout: float = 0.1
    image_width: int = 256
    image_height: int = 256
    grid_width: int = 48
    grid_height: int = 48
    semantic_noise: Optional[float] = None


class TrainRequest(BaseModel):
    steps: int = 500
    batch_size: int = 4
    lr: float = 1e-4
    dim: int = 32
    n_layers: int = 2
    heads: int = 4
    generator: GeneratorConfigModel = Field(default_factory=GeneratorConfigModel)
    seed: int = 0
    out_weights: str
    out_log: str


class TrainResponse(BaseModel):
    out_weights: str
    out_log: str
    steps: int
    final_loss: Optional[float]
    initial_precision: float
    final_precision: float


class GradcheckRequest(BaseModel):
    seed: int = 0
    step: float = 1e-3
    tolerance: float = 1e-3
    # canonical check size; reduce for smoke runs
    n_keypoints: int = 8
    dim: int = 16
    heads: int = 2
    n_layers: int = 2


class GradcheckResponse(BaseModel):
    passed: bool
    max_rel_err: float
    worst_tensor: str
    n_parameters: int
    tolerance: float


class VizRequest(BaseModel):
    a: str
    b: str
    config: RunConfigModel
    out_svg: str
    mode: Literal["matches", "heatmap"] = "matches"
    matches: Optional[str] = None  # match file; matches mode only
    geometry: Optional[str] = None  # sidecar for GT coloring; optional
    query_index: int = 0
    channel: Literal["texture", "semantic", "conditioned"] = "conditioned"
    top_k: int = 128


class VizResponse(BaseModel):
    out_svg: str
    n_lines: int
    n_highlighted: int


class HealthResponse(BaseModel):
    status: str
    version: str
