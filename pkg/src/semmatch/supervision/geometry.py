"""Two-view geometry: reprojection-based ground truth and the sidecar format.

World-to-camera convention: x_cam = R @ X_world + t. Depth maps are dense
H x W float32 grids in meters with 0 marking invalid pixels; depth for a
keypoint is read at the pixel cell containing it (the nearest pixel center).

The geometry sidecar is a small line-oriented text file describing both
views of a pair:

    K1 fx fy cx cy
    R1 r00 r01 r02 r10 r11 r12 r20 r21 r22
    t1 tx ty tz
    depth1 <relative path> <H> <W>
    K2 / R2 / t2 / depth2 ...

Depth files are raw little-endian float32, row-major H x W.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ContractError, ParseError
from ..features import GroundTruthMatches, KeypointSet

_ROT_TOL = 1e-6


@dataclass
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ContractError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]], dtype=np.float64
        )


@dataclass
class ViewGeometry:
    intrinsics: Intrinsics
    rotation: np.ndarray  # (3, 3) world-to-camera
    translation: np.ndarray  # (3,)
    depth: np.ndarray  # (H, W) float32 meters, 0 = invalid

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.depth = np.asarray(self.depth, dtype=np.float32)
        if self.depth.ndim != 2:
            raise ContractError("depth map must be 2-D")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > _ROT_TOL:
            raise ContractError(f"rotation is not orthonormal (deviation {err:.2e})")
        if np.linalg.det(self.rotation) < 0:
            raise ContractError("rotation determinant must be +1")


def project_keypoints(
    kps1: KeypointSet,
    geom1: ViewGeometry,
    geom2: ViewGeometry,
    depth_check: bool = False,
    depth_tol: float = 0.05,
) -> tuple[np.ndarray, np.ndarray]:
    """Reproject view-1 keypoints into view 2 using depth and poses.

    Returns (projected (N, 2) pixels, valid (N,) bool). Keypoints with zero
    depth, landing behind camera 2, or projecting outside view 2 are flagged
    invalid instead of raising. With depth_check, points whose predicted
    camera-2 depth disagrees with view 2's depth map by more than depth_tol
    (relative) are also invalidated, which filters occlusions.
    """
    n = len(kps1)
    projected = np.zeros((n, 2), dtype=np.float64)
    valid = np.zeros(n, dtype=bool)
    if n == 0:
        return projected, valid

    h1, w1 = geom1.depth.shape
    pts = kps1.points.astype(np.float64)
    ix = np.clip(pts[:, 0].astype(np.int64), 0, w1 - 1)
    iy = np.clip(pts[:, 1].astype(np.int64), 0, h1 - 1)
    depths = geom1.depth[iy, ix].astype(np.float64)
    ok = depths > 0

    k1 = geom1.intrinsics
    x_cam1 = np.stack(
        [
            (pts[:, 0] - k1.cx) / k1.fx * depths,
            (pts[:, 1] - k1.cy) / k1.fy * depths,
            depths,
        ],
        axis=1,
    )
    x_world = (x_cam1 - geom1.translation) @ geom1.rotation  # R1^T (x - t1), rows
    x_cam2 = x_world @ geom2.rotation.T + geom2.translation
    ok &= x_cam2[:, 2] > 1e-9

    k2 = geom2.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k2.fx * x_cam2[:, 0] / x_cam2[:, 2] + k2.cx
        v = k2.fy * x_cam2[:, 1] / x_cam2[:, 2] + k2.cy
    h2, w2 = geom2.depth.shape
    inside = ok & (u >= 0) & (u < w2) & (v >= 0) & (v < h2)

    if depth_check:
        ju = np.clip(np.where(inside, u, 0).astype(np.int64), 0, w2 - 1)
        jv = np.clip(np.where(inside, v, 0).astype(np.int64), 0, h2 - 1)
        observed = geom2.depth[jv, ju].astype(np.float64)
        consistent = (observed > 0) & (
            np.abs(x_cam2[:, 2] - observed) <= depth_tol * np.maximum(observed, 1e-9)
        )
        inside &= consistent

    projected[inside] = np.stack([u[inside], v[inside]], axis=1)
    valid = inside
    return projected, valid


def gt_assignment(
    projected: np.ndarray,
    valid: np.ndarray,
    kps2: KeypointSet,
    radius: float = 3.0,
) -> GroundTruthMatches:
    """Mutual-nearest pixel assignment between reprojections and keypoints.

    A pair (i, j) is kept iff their distance is strictly below radius and
    each is the other's nearest (ties to the smallest index via argmin).
    """
    if radius <= 0:
        raise ContractError("radius must be positive")
    projected = np.asarray(projected, dtype=np.float64).reshape(-1, 2)
    valid = np.asarray(valid, dtype=bool).reshape(-1)
    n1, n2 = len(projected), len(kps2)
    if n1 == 0 or n2 == 0 or not valid.any():
        return GroundTruthMatches(np.zeros((0, 2), dtype=np.int64))

    pts2 = kps2.points.astype(np.float64)
    diff = projected[:, None, :] - pts2[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))
    dist[~valid] = np.inf

    nearest_j = np.argmin(dist, axis=1)
    nearest_i = np.argmin(dist, axis=0)
    rows = np.arange(n1)
    picked = dist[rows, nearest_j]
    keep = valid & (nearest_i[nearest_j] == rows) & (picked < radius)
    pairs = np.stack([rows[keep], nearest_j[keep]], axis=1)
    return GroundTruthMatches(pairs)


def relative_pose(geom1: ViewGeometry, geom2: ViewGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Relative transform (R, t) mapping camera-1 coordinates to camera-2."""
    r_rel = geom2.rotation @ geom1.rotation.T
    t_rel = geom2.translation - r_rel @ geom1.translation
    return r_rel, t_rel


# --------------------------------------------------------------------------
# sidecar parsing

_REQUIRED_KEYS = ("K1", "R1", "t1", "depth1", "K2", "R2", "t2", "depth2")


def save_geometry_sidecar(
    path: str | Path,
    geom1: ViewGeometry,
    geom2: ViewGeometry,
    depth1_path: str,
    depth2_path: str,
) -> None:
    """Write the sidecar plus the two raw depth files (paths relative to it)."""
    path = Path(path)
    lines = []
    for tag, geom, dpath in (("1", geom1, depth1_path), ("2", geom2, depth2_path)):
        k = geom.intrinsics
        lines.append(f"K{tag} {k.fx:.17g} {k.fy:.17g} {k.cx:.17g} {k.cy:.17g}")
        lines.append(f"R{tag} " + " ".join(f"{x:.17g}" for x in geom.rotation.reshape(-1)))
        lines.append(f"t{tag} " + " ".join(f"{x:.17g}" for x in geom.translation))
        h, w = geom.depth.shape
        lines.append(f"depth{tag} {dpath} {h} {w}")
        (path.parent / dpath).write_bytes(geom.depth.astype("<f4").tobytes())
    path.write_text("\n".join(lines) + "\n")


def load_geometry_sidecar(path: str | Path) -> tuple[ViewGeometry, ViewGeometry]:
    """Parse a sidecar; malformed lines raise ParseError naming path and line."""
    path = Path(path)
    entries: dict[str, tuple[int, list[str]]] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        tokens = line.split()
        key = tokens[0]
        if key not in _REQUIRED_KEYS:
            raise ParseError(f"line {lineno}: unknown key {key!r}", path=str(path))
        if key in entries:
            raise ParseError(f"line {lineno}: duplicate key {key!r}", path=str(path))
        entries[key] = (lineno, tokens[1:])
    for key in _REQUIRED_KEYS:
        if key not in entries:
            raise ParseError(f"missing key {key!r}", path=str(path))

    def floats(key: str, count: int) -> list[float]:
        lineno, toks = entries[key]
        if len(toks) != count:
            raise ParseError(
                f"line {lineno}: {key} expects {count} values, found {len(toks)}", path=str(path)
            )
        try:
            return [float(t) for t in toks]
        except ValueError as exc:
            raise ParseError(f"line {lineno}: non-numeric value in {key}", path=str(path)) from exc

    def view(tag: str) -> ViewGeometry:
        fx, fy, cx, cy = floats(f"K{tag}", 4)
        rot = np.array(floats(f"R{tag}", 9)).reshape(3, 3)
        t = np.array(floats(f"t{tag}", 3))
        lineno, toks = entries[f"depth{tag}"]
        if len(toks) != 3:
            raise ParseError(f"line {lineno}: depth{tag} expects <path> <H> <W>", path=str(path))
        dpath = path.parent / toks[0]
        try:
            h, w = int(toks[1]), int(toks[2])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: bad depth dims", path=str(path)) from exc
        if not dpath.exists():
            raise ParseError(f"line {lineno}: depth file {toks[0]!r} not found", path=str(path))
        raw = np.frombuffer(dpath.read_bytes(), dtype="<f4")
        if raw.size != h * w:
            raise ParseError(
                f"line {lineno}: depth file holds {raw.size} values, expected {h * w}",
                path=str(path),
            )
        try:
            return ViewGeometry(Intrinsics(fx, fy, cx, cy), rot, t, raw.reshape(h, w))
        except ContractError as exc:
            raise ParseError(f"line {lineno}: {exc}", path=str(path)) from exc

    return view("1"), view("2")
