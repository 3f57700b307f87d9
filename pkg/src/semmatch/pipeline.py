"""End-to-end orchestration: extract-and-cache, pair matching, and evaluation.

These functions are the single implementation behind both the HTTP service
and the CLI. All outputs are deterministic given inputs and seeds; stage
timings are measured but never part of any output file.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cache import FeatureCache, compute_cache_key, config_fingerprint, file_digest
from .conditioning import MatchSet, load_matches, match_pair, save_matches
from .errors import ContractError, SemmatchError
from .features import KeypointSet, RefinedFeatures, load_interchange, sample_semantic
from .pose import RansacConfig, RelativePose, auc, estimate_essential, pose_error, recover_pose
from .reasoning import ReasoningWeights, load_weights, refine
from .supervision import (
    gt_assignment,
    load_geometry_sidecar,
    matching_metrics,
    project_keypoints,
    relative_pose,
)

POSE_FAILURE_DEG = 180.0
AUC_THRESHOLDS = (5.0, 10.0, 20.0)


@dataclass
class RunConfig:
    """Inference-side configuration; every field participates in cache keys
    that it influences."""

    weights: str = ""
    cache_root: str = ""
    dim: int = 256
    n_layers: int = 5
    heads: int = 4
    max_keypoints: int = 2048
    gt_radius: float = 3.0
    min_score: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.max_keypoints < 0:
            raise ContractError("max_keypoints must be >= 0")
        if self.gt_radius <= 0:
            raise ContractError("gt_radius must be positive")

    def fingerprint(self) -> str:
        return config_fingerprint(
            dim=self.dim,
            n_layers=self.n_layers,
            heads=self.heads,
            max_keypoints=self.max_keypoints,
        )

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)


@dataclass
class LoadedModel:
    weights: ReasoningWeights
    digest: str
    cache: FeatureCache


def load_model(config: RunConfig) -> LoadedModel:
    if not config.weights:
        raise ContractError("config.weights is required")
    if not config.cache_root:
        raise ContractError("config.cache_root is required")
    weights = load_weights(config.weights)
    rc = weights.config
    if (rc.dim, rc.n_layers, rc.heads) != (config.dim, config.n_layers, config.heads):
        raise ContractError(
            f"weights file is (dim={rc.dim}, layers={rc.n_layers}, heads={rc.heads}), "
            f"config asks for ({config.dim}, {config.n_layers}, {config.heads})"
        )
    return LoadedModel(weights, file_digest(config.weights), FeatureCache(config.cache_root))


def _truncate_keypoints(kps: KeypointSet, texture, limit: int):
    if limit <= 0 or len(kps) <= limit:
        return kps, texture.matrix
    order = np.argsort(-kps.scores, kind="stable")[:limit]
    order.sort()
    kept = KeypointSet(kps.points[order], kps.scores[order], kps.image_width, kps.image_height)
    return kept, texture.matrix[order]


@dataclass
class ExtractResult:
    path: str
    key: str
    n_keypoints: int
    cache_hit: bool
    timings: dict[str, float] = field(default_factory=dict)


def extract_file(path: str | Path, config: RunConfig, model: LoadedModel) -> tuple[ExtractResult, RefinedFeatures]:
    """Load an interchange file, refine its descriptors, publish to the cache.

    A cache hit skips all computation and returns the stored entry, which is
    bit-identical to what recomputation would produce.
    """
    path = Path(path)
    raw = path.read_bytes()
    key = compute_cache_key(raw, model.digest, config.fingerprint())
    cached = model.cache.get(key)
    if cached is not None:
        return ExtractResult(str(path), key, len(cached), True), cached

    t0 = time.perf_counter()
    kps, texture, semantic_map = load_interchange(path)
    t1 = time.perf_counter()
    kps, texture_matrix = _truncate_keypoints(kps, texture, config.max_keypoints)
    from .features import RawDescriptors

    texture = RawDescriptors(texture_matrix, "texture")
    raw_semantic = sample_semantic(semantic_map, kps)
    t2 = time.perf_counter()
    refined, _ = refine(kps, texture, raw_semantic, model.weights)
    t3 = time.perf_counter()
    model.cache.put(key, refined)
    timings = {
        "texture_load": t1 - t0,
        "semantic_sample": t2 - t1,
        "reasoning": t3 - t2,
    }
    return ExtractResult(str(path), key, len(refined), False, timings), refined


def match_files(
    path_a: str | Path,
    path_b: str | Path,
    config: RunConfig,
    model: LoadedModel,
    texture_only: bool = False,
) -> tuple[MatchSet, ExtractResult, ExtractResult]:
    res_a, feat_a = extract_file(path_a, config, model)
    res_b, feat_b = extract_file(path_b, config, model)
    matches = match_pair(feat_a, feat_b, min_score=config.min_score, texture_only=texture_only)
    return matches, res_a, res_b


@dataclass
class PairEvaluation:
    name: str
    status: str  # ok | gt_empty | pose_failed
    n_matches: int
    precision: float
    recall: float
    n_correct: int
    n_gt: int
    rotation_error_deg: float
    translation_error_deg: float
    pose_error_deg: float


@dataclass
class EvalReport:
    pairs: list[PairEvaluation]
    auc: dict[float, float]
    mean_precision: float
    mean_recall: float
    n_pairs: int
    n_gt_empty: int
    n_pose_failed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "auc": {f"{int(k)}deg": v for k, v in self.auc.items()},
                "mean_precision": self.mean_precision,
                "mean_recall": self.mean_recall,
                "n_pairs": self.n_pairs,
                "n_gt_empty": self.n_gt_empty,
                "n_pose_failed": self.n_pose_failed,
            },
            indent=2,
            sort_keys=True,
        )


def evaluate_pair(
    name: str,
    path_a: str | Path,
    path_b: str | Path,
    matches: MatchSet,
    sidecar: str | Path,
    config: RunConfig,
    sampson_threshold: float = 1e-3,
) -> PairEvaluation:
    kps1, _, _ = load_interchange(path_a)
    kps2, _, _ = load_interchange(path_b)
    geom1, geom2 = load_geometry_sidecar(sidecar)

    projected, valid = project_keypoints(kps1, geom1, geom2)
    gt = gt_assignment(projected, valid, kps2, radius=config.gt_radius)
    if len(gt) == 0:
        return PairEvaluation(name, "gt_empty", len(matches), 1.0, 1.0, 0, 0,
                              POSE_FAILURE_DEG, POSE_FAILURE_DEG, POSE_FAILURE_DEG)

    quality = matching_metrics(matches, gt, projected, valid, kps2, radius=config.gt_radius)

    r_rel, t_rel = relative_pose(geom1, geom2)
    baseline = np.linalg.norm(t_rel)
    status = "ok"
    rot_err = trans_err = POSE_FAILURE_DEG
    if baseline < 1e-9:
        status = "pose_failed"
    else:
        gt_pose = RelativePose(r_rel, t_rel / baseline)
        try:
            if len(matches) < 8:
                raise SemmatchError("too few matches")
            px1 = kps1.points[matches.indices[:, 0]]
            px2 = kps2.points[matches.indices[:, 1]]
            est = estimate_essential(
                px1,
                px2,
                geom1.intrinsics,
                geom2.intrinsics,
                RansacConfig(threshold=sampson_threshold, seed=config.seed),
            )
            pose = recover_pose(est)
            record = pose_error(pose, gt_pose)
            rot_err, trans_err = record.rotation_error_deg, record.translation_error_deg
        except SemmatchError:
            status = "pose_failed"

    return PairEvaluation(
        name,
        status,
        len(matches),
        quality.precision,
        quality.recall,
        quality.n_correct,
        quality.n_gt,
        rot_err,
        trans_err,
        max(rot_err, trans_err),
    )


def sweep_thresholds(
    entries: list[tuple[str, str, str, MatchSet, str]],
    config: RunConfig,
    thresholds: list[float],
) -> tuple[float, dict[float, list[PairEvaluation]]]:
    """Evaluate every pair at each Sampson threshold in the sweep list.

    The reporting threshold is the one maximizing pose AUC@5 (ties to the
    smaller threshold), mirroring per-method threshold searches in pose
    benchmarks. Returns (best threshold, evaluations per threshold).
    """
    if not thresholds:
        raise ContractError("threshold sweep list must not be empty")
    by_threshold: dict[float, list[PairEvaluation]] = {}
    for threshold in thresholds:
        by_threshold[threshold] = [
            evaluate_pair(name, a, b, matches, sidecar, config, sampson_threshold=threshold)
            for name, a, b, matches, sidecar in entries
        ]
    best = thresholds[0]
    best_auc = -1.0
    for threshold in sorted(thresholds):
        report = summarize_evaluations(by_threshold[threshold])
        score = report.auc.get(5.0, 0.0)
        if score > best_auc:
            best_auc, best = score, threshold
    return best, by_threshold


def summarize_evaluations(pairs: list[PairEvaluation]) -> EvalReport:
    scored = [p for p in pairs if p.status != "gt_empty"]
    errors = [p.pose_error_deg for p in scored]
    report_auc = auc(errors, AUC_THRESHOLDS) if errors else {t: 0.0 for t in AUC_THRESHOLDS}
    mean_p = float(np.mean([p.precision for p in scored])) if scored else 1.0
    mean_r = float(np.mean([p.recall for p in scored])) if scored else 1.0
    return EvalReport(
        pairs=pairs,
        auc=report_auc,
        mean_precision=mean_p,
        mean_recall=mean_r,
        n_pairs=len(pairs),
        n_gt_empty=sum(1 for p in pairs if p.status == "gt_empty"),
        n_pose_failed=sum(1 for p in pairs if p.status == "pose_failed"),
    )


def write_eval_csv(path: str | Path, pairs: list[PairEvaluation]) -> None:
    lines = ["name,status,n_matches,precision,recall,n_correct,n_gt,rot_err_deg,trans_err_deg,pose_err_deg"]
    for p in pairs:
        lines.append(
            f"{p.name},{p.status},{p.n_matches},{p.precision:.9g},{p.recall:.9g},"
            f"{p.n_correct},{p.n_gt},{p.rotation_error_deg:.9g},"
            f"{p.translation_error_deg:.9g},{p.pose_error_deg:.9g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_match_file(path: str | Path) -> MatchSet:
    return load_matches(path)


def write_match_file(path: str | Path, matches: MatchSet) -> None:
    save_matches(path, matches)
