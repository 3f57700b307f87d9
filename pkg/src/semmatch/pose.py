"""Relative-pose evaluation: essential matrix, pose recovery, angular errors, AUC.

Estimation runs RANSAC over the normalized (Hartley-scaled) 8-point solver
on intrinsics-normalized coordinates, scores hypotheses by Sampson distance,
and refits the best model on its inliers. Recovered poses are scored by the
maximum of rotation and translation-direction angular error, and pose AUC is
the exact piecewise-constant integral of the cumulative recall curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegeneratePoseError, InsufficientDataError
from .supervision.geometry import Intrinsics

_W_MATRIX = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class RelativePose:
    rotation: np.ndarray  # (3, 3) proper rotation
    translation: np.ndarray  # (3,) unit direction; scale unobservable

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(self.translation) - 1.0) > 1e-6:
            raise ContractError("translation direction must be unit length")
        if np.abs(self.rotation.T @ self.rotation - np.eye(3)).max() > 1e-6:
            raise ContractError("rotation is not orthonormal")
        if np.linalg.det(self.rotation) < 0:
            raise ContractError("rotation determinant must be +1")


@dataclass
class PoseErrorRecord:
    rotation_error_deg: float
    translation_error_deg: float

    @property
    def pose_error_deg(self) -> float:
        return max(self.rotation_error_deg, self.translation_error_deg)


@dataclass
class RansacConfig:
    threshold: float = 1e-3  # Sampson distance in normalized coordinates
    max_iterations: int = 2000
    confidence: float = 0.999
    seed: int = 0


@dataclass
class EssentialEstimate:
    essential: np.ndarray  # (3, 3)
    inliers: np.ndarray  # (M,) bool
    low_confidence: bool
    iterations: int
    x1: np.ndarray = field(repr=False)  # (M, 2) normalized coords
    x2: np.ndarray = field(repr=False)


def _normalize_points(points: np.ndarray, k: Intrinsics) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.stack([(pts[:, 0] - k.cx) / k.fx, (pts[:, 1] - k.cy) / k.fy], axis=1)


def _hartley_transform(pts: np.ndarray) -> np.ndarray:
    """Similarity transform bringing points to zero centroid, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    scale = np.sqrt(2.0) / max(dist, 1e-12)
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def _solve_eight_point(x1: np.ndarray, x2: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares essential matrix from >= 8 normalized correspondences.

    Returns (E, degeneracy ratio): the ratio of the second-smallest to largest
    eigenvalue of the 9x9 normal matrix. A vanishing ratio means the solution
    space is at least two-dimensional (degenerate configuration).
    """
    t1 = _hartley_transform(x1)
    t2 = _hartley_transform(x2)
    h1 = np.concatenate([x1, np.ones((len(x1), 1))], axis=1) @ t1.T
    h2 = np.concatenate([x2, np.ones((len(x2), 1))], axis=1) @ t2.T
    a = np.stack(
        [
            h2[:, 0] * h1[:, 0],
            h2[:, 0] * h1[:, 1],
            h2[:, 0],
            h2[:, 1] * h1[:, 0],
            h2[:, 1] * h1[:, 1],
            h2[:, 1],
            h1[:, 0],
            h1[:, 1],
            np.ones(len(h1)),
        ],
        axis=1,
    )
    normal = a.T @ a
    eigvals, eigvecs = np.linalg.eigh(normal)
    e_hat = eigvecs[:, 0].reshape(3, 3)
    degeneracy = float(eigvals[1] / max(eigvals[-1], 1e-300))
    e = t2.T @ e_hat @ t1
    u, _, vt = np.linalg.svd(e)
    e = u @ np.diag([1.0, 1.0, 0.0]) @ vt
    return e, degeneracy


def _sampson_distance(e: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    h1 = np.concatenate([x1, np.ones((len(x1), 1))], axis=1)
    h2 = np.concatenate([x2, np.ones((len(x2), 1))], axis=1)
    ex1 = h1 @ e.T  # rows: E x1
    etx2 = h2 @ e  # rows: E^T x2
    num = (h2 * ex1).sum(axis=1) ** 2
    den = ex1[:, 0] ** 2 + ex1[:, 1] ** 2 + etx2[:, 0] ** 2 + etx2[:, 1] ** 2
    return num / np.maximum(den, 1e-300)


_DEGENERACY_RATIO = 1e-9


def estimate_essential(
    points1: np.ndarray,
    points2: np.ndarray,
    k1: Intrinsics,
    k2: Intrinsics,
    config: RansacConfig | None = None,
) -> EssentialEstimate:
    """RANSAC essential-matrix estimation from pixel correspondences.

    Deterministic given config.seed. Raises InsufficientDataError below 8
    correspondences; near-degenerate data (pure rotation, coplanar-with-
    centers points) is returned flagged low_confidence rather than raised.
    """
    config = config or RansacConfig()
    x1 = _normalize_points(points1, k1)
    x2 = _normalize_points(points2, k2)
    n = len(x1)
    if len(x2) != n:
        raise ContractError(f"{n} vs {len(x2)} correspondences")
    if n < 8:
        raise InsufficientDataError(f"essential matrix needs >= 8 correspondences, got {n}")

    rng = np.random.default_rng(config.seed)
    best_inliers: np.ndarray | None = None
    best_count = -1
    best_score = np.inf
    needed = float(config.max_iterations)
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        subset = rng.choice(n, size=8, replace=False)
        try:
            e, _ = _solve_eight_point(x1[subset], x2[subset])
        except np.linalg.LinAlgError:
            continue
        d = _sampson_distance(e, x1, x2)
        inliers = d < config.threshold
        count = int(inliers.sum())
        score = float(d[inliers].sum())
        if count > best_count or (count == best_count and score < best_score):
            best_count, best_score, best_inliers = count, score, inliers
            # Iterations needed for confidence that an all-inlier sample was drawn.
            p_good = (best_count / n) ** 8
            if p_good >= 1.0:
                needed = iterations
            elif p_good > 0:
                needed = np.log(1.0 - config.confidence) / np.log(1.0 - p_good)
        if iterations >= needed:
            break

    if best_inliers is None or best_count < 8:
        e_final, degeneracy = _solve_eight_point(x1, x2)
        d = _sampson_distance(e_final, x1, x2)
        return EssentialEstimate(e_final, d < config.threshold, True, iterations, x1, x2)

    e_final, degeneracy = _solve_eight_point(x1[best_inliers], x2[best_inliers])
    d = _sampson_distance(e_final, x1, x2)
    refined = d < config.threshold
    if refined.sum() >= 8:
        e_final, degeneracy = _solve_eight_point(x1[refined], x2[refined])
        refined = _sampson_distance(e_final, x1, x2) < config.threshold
    low_confidence = bool(degeneracy < _DEGENERACY_RATIO) or int(refined.sum()) < 8
    return EssentialEstimate(e_final, refined, low_confidence, iterations, x1, x2)


def _triangulate(x1: np.ndarray, x2: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear triangulation in camera-1 coordinates for P1=[I|0], P2=[R|t]."""
    points = np.empty((len(x1), 3))
    p2 = np.concatenate([r, t[:, None]], axis=1)
    for idx, (a, b) in enumerate(zip(x1, x2)):
        rows = np.array(
            [
                [-1.0, 0.0, a[0], 0.0],
                [0.0, -1.0, a[1], 0.0],
                b[0] * p2[2] - p2[0],
                b[1] * p2[2] - p2[1],
            ],
            dtype=np.float64,
        )
        _, _, vt = np.linalg.svd(rows)
        hom = vt[-1]
        points[idx] = hom[:3] / hom[3] if abs(hom[3]) > 1e-300 else np.full(3, np.inf)
    return points


_PARALLEL_TOL = 1e-12


def recover_pose(
    estimate: EssentialEstimate,
    min_valid_fraction: float = 0.5,
) -> RelativePose:
    """Pick the (R, t) candidate with cheirality: most points in front of both cameras.

    Rays that are numerically parallel (pure rotation) cannot vote; if no
    candidate wins a strict majority of decidable points, the configuration
    is declared degenerate.
    """
    x1 = estimate.x1[estimate.inliers]
    x2 = estimate.x2[estimate.inliers]
    if len(x1) == 0:
        raise DegeneratePoseError("no inliers to recover a pose from")

    u, _, vt = np.linalg.svd(estimate.essential)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    r_a = u @ _W_MATRIX @ vt
    r_b = u @ _W_MATRIX.T @ vt
    t_dir = u[:, 2]
    t_norm = np.linalg.norm(t_dir)
    if t_norm < 1e-12:
        raise DegeneratePoseError("essential matrix has no translation component")
    t_dir = t_dir / t_norm

    best: tuple[int, RelativePose] | None = None
    n = len(x1)
    for r in (r_a, r_b):
        for t in (t_dir, -t_dir):
            ray1 = np.concatenate([x1, np.ones((n, 1))], axis=1)
            ray1 /= np.linalg.norm(ray1, axis=1, keepdims=True)
            ray2 = np.concatenate([x2, np.ones((n, 1))], axis=1) @ r  # R^T x2, rows
            ray2 /= np.linalg.norm(ray2, axis=1, keepdims=True)
            decidable = 1.0 - np.abs((ray1 * ray2).sum(axis=1)) > _PARALLEL_TOL
            if not decidable.any():
                continue
            pts = _triangulate(x1[decidable], x2[decidable], r, t)
            depth1 = pts[:, 2]
            depth2 = (pts @ r.T + t)[:, 2]
            good = int(((depth1 > 0) & (depth2 > 0) & np.isfinite(depth1)).sum())
            if best is None or good > best[0]:
                best = (good, RelativePose(r, t))
    if best is None or best[0] <= min_valid_fraction * n:
        raise DegeneratePoseError(
            "no pose candidate places a majority of points in front of both cameras "
            "(zero-baseline or contaminated geometry)"
        )
    return best[1]


def pose_error(estimated: RelativePose, reference: RelativePose) -> PoseErrorRecord:
    """Angular rotation error and sign-invariant translation-direction error."""
    cos_r = (np.trace(reference.rotation.T @ estimated.rotation) - 1.0) / 2.0
    rot_err = float(np.degrees(np.arccos(np.clip(cos_r, -1.0, 1.0))))
    cos_t = abs(float(estimated.translation @ reference.translation))
    tr_err = float(np.degrees(np.arccos(np.clip(cos_t, 0.0, 1.0))))
    return PoseErrorRecord(rot_err, tr_err)


def essential_from_pose(pose: RelativePose | tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """E = [t]x R for a relative pose (camera-1 to camera-2)."""
    if isinstance(pose, RelativePose):
        r, t = pose.rotation, pose.translation
    else:
        r, t = pose
    tx = np.array(
        [
            [0.0, -t[2], t[1]],
            [t[2], 0.0, -t[0]],
            [-t[1], t[0], 0.0],
        ]
    )
    return tx @ r


def auc(errors, thresholds=(5.0, 10.0, 20.0)) -> dict[float, float]:
    """Exact area under the cumulative recall curve, normalized per threshold.

    Failed pairs should be encoded as 180 degrees before calling.
    """
    errors = sorted(float(e) for e in errors)
    if not errors:
        raise ContractError("auc needs at least one error value")
    if not all(np.isfinite(e) for e in errors):
        raise ContractError("errors must be finite (encode failures as 180)")
    n = len(errors)
    out = {}
    for tau in thresholds:
        integral = 0.0
        prev_e = 0.0
        recall = 0.0
        for k, e in enumerate(errors):
            if e > tau:
                break
            integral += (e - prev_e) * recall
            prev_e = e
            recall = (k + 1) / n
        integral += (tau - prev_e) * recall
        out[float(tau)] = integral / tau
    return out
