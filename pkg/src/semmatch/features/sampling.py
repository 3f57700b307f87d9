"""Bicubic sampling of dense semantic maps, projections, and normalization.

Pixel-to-grid mapping uses half-pixel-center alignment: a keypoint at pixel
(x, y) of a (W, H) image samples the (W', H') grid at

    gx = (x + 0.5) * W' / W - 0.5,   gy = (y + 0.5) * H' / H - 0.5.

Interpolation is separable Catmull-Rom bicubic (kernel parameter a = -0.5)
with clamp-to-edge borders, so the sampler reproduces grid values exactly at
cell centers and reproduces affine ramps away from the borders.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .types import DenseSemanticMap, KeypointSet, RawDescriptors

_A = -0.5  # Catmull-Rom


def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Weights of the four taps at offsets (-1, 0, 1, 2) for fraction t in [0, 1)."""
    t = np.asarray(t, dtype=np.float64)
    s = np.stack([t + 1.0, t, 1.0 - t, 2.0 - t], axis=-1)
    near = (_A + 2.0) * s**3 - (_A + 3.0) * s**2 + 1.0
    far = _A * s**3 - 5.0 * _A * s**2 + 8.0 * _A * s - 4.0 * _A
    return np.where(s <= 1.0, near, far)


def sample_semantic(semantic_map: DenseSemanticMap, keypoints: KeypointSet) -> RawDescriptors:
    """Sample the C-channel grid at every keypoint; returns (N, C) semantic descriptors."""
    if (semantic_map.image_width, semantic_map.image_height) != (
        keypoints.image_width,
        keypoints.image_height,
    ):
        raise ContractError(
            "semantic map covers a "
            f"{semantic_map.image_width}x{semantic_map.image_height} image but keypoints "
            f"reference {keypoints.image_width}x{keypoints.image_height}"
        )
    grid = semantic_map.grid
    gh, gw, c = grid.shape
    n = len(keypoints)
    if n == 0:
        return RawDescriptors(np.zeros((0, c), dtype=np.float32), "semantic")

    pts = keypoints.points.astype(np.float64)
    gx = (pts[:, 0] + 0.5) * (gw / keypoints.image_width) - 0.5
    gy = (pts[:, 1] + 0.5) * (gh / keypoints.image_height) - 0.5

    x0 = np.floor(gx)
    y0 = np.floor(gy)
    wx = _cubic_weights(gx - x0)  # (N, 4)
    wy = _cubic_weights(gy - y0)

    # Tap indices at offsets -1..2, clamped to the grid (clamp-to-edge).
    offs = np.arange(-1, 3)
    ix = np.clip(x0[:, None].astype(np.int64) + offs, 0, gw - 1)  # (N, 4)
    iy = np.clip(y0[:, None].astype(np.int64) + offs, 0, gh - 1)

    # Gather the 4x4 neighborhood and contract with the separable weights.
    patch = grid[iy[:, :, None], ix[:, None, :], :].astype(np.float64)  # (N, 4, 4, C)
    out = np.einsum("nyxc,ny,nx->nc", patch, wy, wx, optimize=True)
    return RawDescriptors(out.astype(np.float32), "semantic")


def project_raw(raw: RawDescriptors, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Row-wise affine map (N, D_in) -> (N, d). No normalization here."""
    weight = np.asarray(weight)
    bias = np.asarray(bias)
    if weight.ndim != 2 or raw.dim != weight.shape[0]:
        raise ContractError(
            f"projection expects {weight.shape[0] if weight.ndim == 2 else '?'}-dim input, "
            f"descriptors are {raw.dim}-dim"
        )
    if bias.shape != (weight.shape[1],):
        raise ContractError(f"bias shape {bias.shape} does not match output dim {weight.shape[1]}")
    return raw.matrix @ weight + bias


def l2_normalize(rows: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Scale each row to unit L2 norm; rows with norm <= eps map to zero rows."""
    rows = np.asarray(rows)
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    return rows / np.maximum(norms, eps)
