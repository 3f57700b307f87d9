"""Synthetic two-view scene generator with ground truth by construction.

The generator builds scenes where texture alone cannot disambiguate matches:
every keypoint has exactly one "texture twin" in a different semantic region
whose texture descriptor is nearly identical (distance < the configured noise
level, exactly identical at noise 0), while the dense semantic map carries
the region identity. Texture-only mutual-nearest-neighbor matching therefore
hovers near coin-flip precision, and any matcher that exploits the semantic
channel can recover the true assignment.

View 2 re-observes view 1's keypoints with sub-pixel jitter, descriptor
noise, an exact dropout count removed, and a shuffled ordering. The semantic
map is repainted per view with independent cell noise, mimicking two separate
dense-model evaluations of the same scene.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from .types import (
    DenseSemanticMap,
    GroundTruthMatches,
    ImageFeatures,
    KeypointSet,
    RawDescriptors,
    SyntheticScenePair,
)

# Twin texture distance as a fraction of the noise level. Kept well below 1 so
# a view-2 observation is as likely to sit nearer the twin as nearer the true
# source, which is what makes texture-only matching commit wrong mutual pairs
# instead of merely dropping ambiguous ones.
TWIN_OFFSET_FRACTION = 0.02


@dataclass
class GeneratorConfig:
    n_keypoints: int = 256
    n_regions: int = 8
    texture_dim: int = 32
    semantic_channels: int = 16
    noise: float = 0.1
    dropout: float = 0.0
    image_width: int = 256
    image_height: int = 256
    grid_width: int = 48
    grid_height: int = 48
    # Cell noise of the semantic map, per view; defaults to `noise`.
    semantic_noise: float | None = None

    def __post_init__(self):
        if self.n_regions < 2:
            raise ContractError("need at least 2 semantic regions")
        if self.n_keypoints < 2 * self.n_regions:
            raise ContractError("need at least 2 keypoints per region (N >= 2R)")
        if self.n_keypoints % 2 != 0:
            raise ContractError("n_keypoints must be even (keypoints come in twin pairs)")
        if self.semantic_channels < self.n_regions:
            raise ContractError("semantic_channels must be >= n_regions for orthonormal prototypes")
        if not (0.0 <= self.dropout < 1.0):
            raise ContractError("dropout must be in [0, 1)")

    @property
    def map_noise(self) -> float:
        return self.noise if self.semantic_noise is None else self.semantic_noise


def _nearest_region(points: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    d2 = ((points[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1).astype(np.int64)


def _paint_map(cfg: GeneratorConfig, seeds: np.ndarray, prototypes: np.ndarray, rng) -> np.ndarray:
    gh, gw = cfg.grid_height, cfg.grid_width
    cx = (np.arange(gw) + 0.5) * (cfg.image_width / gw)
    cy = (np.arange(gh) + 0.5) * (cfg.image_height / gh)
    centers = np.stack(np.meshgrid(cx, cy), axis=-1).reshape(-1, 2)  # (gh*gw, 2)
    regions = _nearest_region(centers, seeds)
    grid = prototypes[regions].reshape(gh, gw, cfg.semantic_channels).astype(np.float64)
    if cfg.map_noise > 0:
        grid = grid + cfg.map_noise * rng.standard_normal(grid.shape) / np.sqrt(cfg.semantic_channels)
    return grid.astype(np.float32)


def generate_synthetic_pair(cfg: GeneratorConfig, seed: int) -> SyntheticScenePair:
    """Build a deterministic two-view scene; same (cfg, seed) gives identical bytes."""
    rng = np.random.default_rng(seed)
    n, r = cfg.n_keypoints, cfg.n_regions
    w, h = cfg.image_width, cfg.image_height

    # Orthonormal region prototypes so oracle semantic correlation is exactly
    # 1 within a region and 0 across regions.
    basis = rng.standard_normal((cfg.semantic_channels, r))
    q, _ = np.linalg.qr(basis)
    prototypes = np.ascontiguousarray(q.T, dtype=np.float64)  # (R, C)

    seeds = rng.uniform((0, 0), (w, h), size=(r, 2))

    # Twin pairs: member A anywhere, member B forced into a different region.
    # B candidates are drawn in vectorized rounds of rejection sampling; pairs
    # still unresolved afterwards are pinned next to another region's seed.
    n_pairs = n // 2
    pts_a = rng.uniform((0, 0), (w, h), size=(n_pairs, 2))
    regions_a = _nearest_region(pts_a, seeds)
    pts_b = np.zeros((n_pairs, 2))
    unresolved = np.ones(n_pairs, dtype=bool)
    for _ in range(64):
        if not unresolved.any():
            break
        cand = rng.uniform((0, 0), (w, h), size=(n_pairs, 2))
        ok = unresolved & (_nearest_region(cand, seeds) != regions_a)
        pts_b[ok] = cand[ok]
        unresolved &= ~ok
    if unresolved.any():
        other = (regions_a[unresolved] + 1) % r
        forced = seeds[other] + rng.uniform(-1, 1, size=(int(unresolved.sum()), 2))
        pts_b[unresolved] = np.clip(forced, 0, (w - 1e-3, h - 1e-3))
    points1 = np.empty((n, 2), dtype=np.float64)
    points1[0::2] = pts_a
    points1[1::2] = pts_b
    regions1 = _nearest_region(points1, seeds)

    # Texture: one base vector per twin pair; the twin sits within
    # TWIN_OFFSET_FRACTION * noise of it (bit-identical at noise 0).
    base = rng.standard_normal((n // 2, cfg.texture_dim))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    offsets = rng.standard_normal((n // 2, cfg.texture_dim))
    offsets /= np.linalg.norm(offsets, axis=1, keepdims=True)
    tex1 = np.empty((n, cfg.texture_dim), dtype=np.float64)
    tex1[0::2] = base
    tex1[1::2] = base + TWIN_OFFSET_FRACTION * cfg.noise * offsets

    scores1 = rng.uniform(0.25, 1.0, size=n)
    map1 = _paint_map(cfg, seeds, prototypes, rng)

    # View 2: drop an exact count, jitter positions <= 1 px, perturb
    # descriptors, then shuffle the ordering (a real detector would not
    # preserve view 1's order, and order-preserving ties would make
    # texture-only matching look spuriously clean).
    n_drop = int(round(cfg.dropout * n))
    survivors = np.sort(rng.permutation(n)[: n - n_drop])
    jitter = rng.uniform(-1.0, 1.0, size=(len(survivors), 2))
    points2 = np.clip(points1[survivors] + jitter, 0, (w - 1e-3, h - 1e-3))
    tex2 = tex1[survivors]
    if cfg.noise > 0:
        tex2 = tex2 + cfg.noise * rng.standard_normal(tex2.shape) / np.sqrt(cfg.texture_dim)
    order = rng.permutation(len(survivors))
    points2, tex2 = points2[order], tex2[order]
    scores2 = rng.uniform(0.25, 1.0, size=len(survivors))
    map2 = _paint_map(cfg, seeds, prototypes, rng)
    regions2 = _nearest_region(points2, seeds)

    # order[slot] = final position of survivor slot; invert for GT pairs.
    position_of_slot = np.empty_like(order)
    position_of_slot[order] = np.arange(len(order))
    gt_pairs = np.stack([survivors, position_of_slot], axis=1)

    view1 = ImageFeatures(
        KeypointSet(points1, scores1, w, h),
        RawDescriptors(tex1.astype(np.float32), "texture"),
        DenseSemanticMap(map1, w, h),
    )
    view2 = ImageFeatures(
        KeypointSet(points2, scores2, w, h),
        RawDescriptors(tex2.astype(np.float32), "texture"),
        DenseSemanticMap(map2, w, h),
    )
    return SyntheticScenePair(
        view1=view1,
        view2=view2,
        gt=GroundTruthMatches(gt_pairs),
        regions1=regions1,
        regions2=regions2,
        prototypes=prototypes.astype(np.float32),
    )


def oracle_semantic_descriptors(pair: SyntheticScenePair) -> tuple[np.ndarray, np.ndarray]:
    """Per-keypoint region prototypes: the semantics a perfect model would report."""
    protos = pair.prototypes.astype(np.float64)
    return protos[pair.regions1], protos[pair.regions2]
