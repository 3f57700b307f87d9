"""Central finite-difference verification of the analytic gradients.

Every parameter entry is perturbed at float64 precision and the resulting
loss slope is compared against the hand-derived backward pass. The numeric
slope is the Richardson extrapolation of central differences at the base
step and half of it,

    slope = (4 * cd(step / 2) - cd(step)) / 3,   cd(s) = (L(+s) - L(-s)) / (2 s),

which cancels the O(step^2) truncation term; plain central differences at
step 1e-3 carry truncation above 1e-5 for this loss surface, which would
drown the comparison in oracle error. The reported relative error for one
entry is

    |analytic - numeric| / max(1, |analytic|, |numeric|)

so near-zero gradients are judged on absolute error instead of exploding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..features import GeneratorConfig, generate_synthetic_pair, sample_semantic
from .engine import PairInputs, forward_backward, pair_loss
from .weights import ReasoningConfig, ReasoningWeights, init_weights


@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_tensor: str
    per_tensor: dict[str, float]
    n_parameters: int

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_err < tolerance


def finite_difference_check(
    weights: ReasoningWeights,
    pair: PairInputs,
    gt_pairs: np.ndarray,
    step: float = 1e-3,
) -> GradCheckReport:
    """Compare analytic gradients with central differences over every entry."""
    w64 = weights.astype(np.float64)
    result = forward_backward(pair, w64, gt_pairs)
    per_tensor: dict[str, float] = {}
    worst = ("", 0.0)
    n_params = 0
    for name, arr in w64.named_tensors():
        analytic = result.grads[name]
        flat = arr.reshape(-1) if arr.ndim else arr.reshape(1)
        aflat = analytic.reshape(-1) if analytic.ndim else analytic.reshape(1)
        tensor_err = 0.0
        for idx in range(flat.size):
            original = flat[idx]

            def central(s: float) -> float:
                flat[idx] = original + s
                up = pair_loss(pair, w64, gt_pairs)
                flat[idx] = original - s
                down = pair_loss(pair, w64, gt_pairs)
                flat[idx] = original
                return (up - down) / (2.0 * s)

            numeric = (4.0 * central(step / 2.0) - central(step)) / 3.0
            a = float(aflat[idx])
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            tensor_err = max(tensor_err, rel)
        per_tensor[name] = tensor_err
        if tensor_err >= worst[1]:
            worst = (name, tensor_err)
        n_params += flat.size
    return GradCheckReport(worst[1], worst[0], per_tensor, n_params)


def standard_check(
    seed: int = 0,
    step: float = 1e-3,
    n_keypoints: int = 8,
    dim: int = 16,
    heads: int = 2,
    n_layers: int = 2,
) -> GradCheckReport:
    """The canonical tiny-config check: N=8 keypoints, d=16, 2 heads, 2 layers.

    Weights are randomly perturbed away from the zero-initialized residuals so
    no gradient sits at a symmetric point. Smaller overrides exist for quick
    smoke runs; the defaults are the full canonical check.
    """
    gen_cfg = GeneratorConfig(
        n_keypoints=n_keypoints,
        n_regions=2,
        texture_dim=6,
        semantic_channels=5,
        noise=0.3,
        dropout=0.0,
        grid_width=12,
        grid_height=12,
    )
    scene = generate_synthetic_pair(gen_cfg, seed=seed)
    raw_s1 = sample_semantic(scene.view1.semantic_map, scene.view1.keypoints)
    raw_s2 = sample_semantic(scene.view2.semantic_map, scene.view2.keypoints)
    pair = PairInputs(
        raw_t1=scene.view1.texture.matrix,
        raw_s1=raw_s1.matrix,
        raw_t2=scene.view2.texture.matrix,
        raw_s2=raw_s2.matrix,
    )

    config = ReasoningConfig(
        dim=dim, n_layers=n_layers, heads=heads, texture_dim=6, semantic_dim=5
    )
    weights = init_weights(config, seed=seed).astype(np.float64)
    rng = np.random.default_rng(seed + 1)
    for _, arr in weights.named_tensors():
        arr += 0.05 * rng.standard_normal(arr.shape)
    return finite_difference_check(weights, pair, scene.gt.pairs, step=step)
