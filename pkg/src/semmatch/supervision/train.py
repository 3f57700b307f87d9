"""Adam training loop over synthetic pairs, with per-step metrics.

Every step draws fresh pairs from seeds derived deterministically from the
root seed, accumulates exact gradients in a fixed order, applies one Adam
update, and evaluates conditioned mutual-nearest precision on one held-out
pair that never enters training. The whole run is reproducible bit-for-bit
from (config, seed).
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..conditioning import match_pair
from ..errors import ContractError, TrainingDivergedError
from ..features import (
    GeneratorConfig,
    SyntheticScenePair,
    generate_synthetic_pair,
    sample_semantic,
)
from ..reasoning import (
    PairInputs,
    ReasoningConfig,
    ReasoningWeights,
    forward_backward,
    refine,
    zero_grads,
)
from ..reasoning.weights import init_weights, weights_from_tensors
from .metrics import matching_metrics

_HOLDOUT_SEED_OFFSET = 10_000_019


@dataclass
class TrainConfig:
    steps: int = 500
    batch_size: int = 4
    lr: float = 1e-4
    dim: int = 32
    n_layers: int = 2
    heads: int = 4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ContractError("steps must be >= 0 and batch_size >= 1")
        if self.lr < 0:
            raise ContractError("learning rate must be >= 0")

    def reasoning_config(self) -> ReasoningConfig:
        return ReasoningConfig(
            dim=self.dim,
            n_layers=self.n_layers,
            heads=self.heads,
            texture_dim=self.generator.texture_dim,
            semantic_dim=self.generator.semantic_channels,
        )

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        data = json.loads(text)
        gen = data.pop("generator", None)
        cfg = cls(**data) if gen is None else cls(generator=GeneratorConfig(**gen), **data)
        return cfg


@dataclass
class StepMetrics:
    step: int
    loss: float
    precision: float


@dataclass
class TrainResult:
    weights: ReasoningWeights  # float32 storage dtype
    metrics: list[StepMetrics]
    initial_precision: float
    final_precision: float


def _pair_inputs(scene: SyntheticScenePair) -> PairInputs:
    raw_s1 = sample_semantic(scene.view1.semantic_map, scene.view1.keypoints)
    raw_s2 = sample_semantic(scene.view2.semantic_map, scene.view2.keypoints)
    return PairInputs(
        raw_t1=scene.view1.texture.matrix,
        raw_s1=raw_s1.matrix,
        raw_t2=scene.view2.texture.matrix,
        raw_s2=raw_s2.matrix,
    )


def holdout_precision(weights: ReasoningWeights, scene: SyntheticScenePair, min_score: float = 0.0) -> float:
    """Conditioned MNN precision of the refined pipeline on one scene."""
    raw_s1 = sample_semantic(scene.view1.semantic_map, scene.view1.keypoints)
    raw_s2 = sample_semantic(scene.view2.semantic_map, scene.view2.keypoints)
    f1, _ = refine(scene.view1.keypoints, scene.view1.texture, raw_s1, weights)
    f2, _ = refine(scene.view2.keypoints, scene.view2.texture, raw_s2, weights)
    matches = match_pair(f1, f2, min_score=min_score)
    return matching_metrics(matches, scene.gt).precision


def _fast_holdout_precision(weights: ReasoningWeights, inputs: PairInputs, gt_set: set, min_score: float) -> float:
    """Per-step precision on pre-sampled holdout inputs (avoids re-sampling)."""
    from ..conditioning import CorrelationMatrix, mnn
    from ..reasoning.engine import _refine_tape

    _, (t1, s1), _ = _refine_tape(weights, np.asarray(inputs.raw_t1, np.float64), np.asarray(inputs.raw_s1, np.float64))
    _, (t2, s2), _ = _refine_tape(weights, np.asarray(inputs.raw_t2, np.float64), np.asarray(inputs.raw_s2, np.float64))
    matches = mnn(CorrelationMatrix((t1 @ t2.T) * (s1 @ s2.T), "conditioned"), min_score)
    if len(matches) == 0:
        return 1.0
    correct = sum(1 for i, j in matches.indices if (int(i), int(j)) in gt_set)
    return correct / len(matches)


def train(config: TrainConfig, seed: int) -> TrainResult:
    """Run the toy training experiment; deterministic given (config, seed)."""
    weights64 = init_weights(config.reasoning_config(), seed).astype(np.float64)
    params = dict(weights64.named_tensors())
    m = zero_grads(weights64)
    v = zero_grads(weights64)
    names = sorted(params)

    holdout = generate_synthetic_pair(config.generator, seed + _HOLDOUT_SEED_OFFSET)
    holdout_inputs = _pair_inputs(holdout)
    holdout_gt = {(int(i), int(j)) for i, j in holdout.gt.pairs}
    initial_precision = _fast_holdout_precision(weights64, holdout_inputs, holdout_gt, 0.0)

    metrics: list[StepMetrics] = []
    precision = initial_precision
    for step in range(config.steps):
        grads = zero_grads(weights64)
        batch_loss = 0.0
        for k in range(config.batch_size):
            pair_seed = seed + 1 + step * config.batch_size + k
            scene = generate_synthetic_pair(config.generator, pair_seed)
            result = forward_backward(_pair_inputs(scene), weights64, scene.gt.pairs)
            batch_loss += result.loss
            for name in names:
                grads[name] += result.grads[name]
        batch_loss /= config.batch_size
        if not np.isfinite(batch_loss):
            norms = {name: float(np.linalg.norm(params[name])) for name in names}
            biggest = max(norms, key=norms.get)
            raise TrainingDivergedError(
                f"non-finite loss at step {step}; largest parameter {biggest} "
                f"(norm {norms[biggest]:.3e})"
            )

        t = step + 1
        bias1 = 1.0 - config.adam_beta1**t
        bias2 = 1.0 - config.adam_beta2**t
        for name in names:
            g = grads[name] / config.batch_size
            m[name] = config.adam_beta1 * m[name] + (1.0 - config.adam_beta1) * g
            v[name] = config.adam_beta2 * v[name] + (1.0 - config.adam_beta2) * (g * g)
            params[name] -= config.lr * (m[name] / bias1) / (np.sqrt(v[name] / bias2) + config.adam_eps)

        precision = _fast_holdout_precision(weights64, holdout_inputs, holdout_gt, 0.0)
        metrics.append(StepMetrics(step, batch_loss, precision))

    final32 = weights_from_tensors(
        weights64.config, {name: params[name].astype(np.float32) for name in params}
    )
    return TrainResult(final32, metrics, initial_precision, precision)


def toy_mechanism_config() -> TrainConfig:
    """The tuned ambiguity-generator preset for the desk-scale mechanism run.

    Texture twins make texture-only matching land near coin-flip precision,
    the per-view semantic map noise leaves conditioned matching mediocre at
    initialization, and 500 Adam steps of the refinement stack lift held-out
    conditioned precision above 0.95. The production-scale learning rate
    (1e-4) is far too slow for a 500-step toy budget, hence 5e-3 here.
    """
    return TrainConfig(
        steps=500,
        batch_size=4,
        lr=5e-3,
        dim=48,
        n_layers=2,
        heads=2,
        generator=GeneratorConfig(
            n_keypoints=256,
            n_regions=8,
            texture_dim=32,
            semantic_channels=64,
            noise=0.05,
            dropout=0.1,
            semantic_noise=2.0,
        ),
    )


def write_metrics_csv(path: str | Path, metrics: list[StepMetrics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "precision"])
        for row in metrics:
            writer.writerow([row.step, f"{row.loss:.9g}", f"{row.precision:.9g}"])
