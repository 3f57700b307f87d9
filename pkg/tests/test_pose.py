import numpy as np
import pytest

from semmatch.errors import ContractError, DegeneratePoseError, InsufficientDataError
from semmatch.pose import (
    RansacConfig,
    RelativePose,
    auc,
    essential_from_pose,
    estimate_essential,
    pose_error,
    recover_pose,
)

from twoview import make_scene, rotation_matrix


def test_noiseless_scene_recovers_exactly():
    for seed in range(6):
        scene = make_scene(seed, n_points=50)
        est = estimate_essential(
            scene.uv1, scene.uv2, scene.intrinsics, scene.intrinsics, RansacConfig(seed=seed)
        )
        assert est.inliers.all()
        assert not est.low_confidence
        e_gt = essential_from_pose(scene.relative)
        cos = abs(np.sum(est.essential * e_gt)) / (
            np.linalg.norm(est.essential) * np.linalg.norm(e_gt)
        )
        assert cos >= 0.9999
        pose = recover_pose(est)
        err = pose_error(pose, scene.relative)
        assert err.rotation_error_deg < 0.1
        assert err.translation_error_deg < 0.1


def test_estimated_essential_constraints():
    scene = make_scene(7, n_points=60)
    est = estimate_essential(scene.uv1, scene.uv2, scene.intrinsics, scene.intrinsics)
    s = np.linalg.svd(est.essential, compute_uv=False)
    assert abs(np.linalg.det(est.essential)) < 1e-6
    assert abs(s[0] - s[1]) < 1e-6 and s[2] < 1e-9


def test_outlier_contamination():
    rng = np.random.default_rng(8)
    scene = make_scene(8, n_points=50)
    bad1 = rng.uniform((0, 0), (scene.width, scene.height), size=(50, 2))
    bad2 = rng.uniform((0, 0), (scene.width, scene.height), size=(50, 2))
    uv1 = np.concatenate([scene.uv1, bad1])
    uv2 = np.concatenate([scene.uv2, bad2])
    est = estimate_essential(uv1, uv2, scene.intrinsics, scene.intrinsics, RansacConfig(seed=8))
    assert est.inliers[:50].sum() >= 48


def test_insufficient_matches():
    scene = make_scene(9, n_points=10)
    with pytest.raises(InsufficientDataError):
        estimate_essential(
            scene.uv1[:7], scene.uv2[:7], scene.intrinsics, scene.intrinsics
        )


def test_pure_rotation_degenerate():
    scene = make_scene(10, n_points=40, baseline=0.0)
    est = estimate_essential(scene.uv1, scene.uv2, scene.intrinsics, scene.intrinsics)
    assert est.low_confidence
    with pytest.raises(DegeneratePoseError):
        recover_pose(est)


def test_sign_flipped_essential_same_pose():
    scene = make_scene(11, n_points=50)
    est = estimate_essential(scene.uv1, scene.uv2, scene.intrinsics, scene.intrinsics)
    pose_a = recover_pose(est)
    from dataclasses import replace

    flipped = replace(est, essential=-est.essential)
    pose_b = recover_pose(flipped)
    err = pose_error(pose_a, pose_b)
    assert err.pose_error_deg < 1e-4


def test_pose_error_cases():
    scene = make_scene(12, n_points=20)
    gt = scene.relative
    zero = pose_error(gt, gt)
    # arccos amplifies float error near 1, so "zero" is ~1e-6 degrees
    assert zero.rotation_error_deg < 1e-4 and zero.translation_error_deg < 1e-4

    r10 = rotation_matrix([0.3, 1.0, -0.2], np.radians(10.0))
    rotated = RelativePose(gt.rotation @ r10, gt.translation)
    err = pose_error(rotated, gt)
    assert abs(err.rotation_error_deg - 10.0) < 0.01
    assert err.translation_error_deg < 1e-4
    assert abs(err.pose_error_deg - 10.0) < 0.01

    flipped = RelativePose(gt.rotation, -gt.translation)
    assert pose_error(flipped, gt).translation_error_deg < 1e-4


def test_pose_error_symmetry():
    a = make_scene(13, n_points=20).relative
    b = make_scene(14, n_points=20).relative
    ab = pose_error(a, b)
    ba = pose_error(b, a)
    assert abs(ab.rotation_error_deg - ba.rotation_error_deg) < 1e-9
    assert abs(ab.translation_error_deg - ba.translation_error_deg) < 1e-9


def test_auc_cases():
    assert auc([0.0, 0.0], (5.0, 10.0, 20.0)) == {5.0: 1.0, 10.0: 1.0, 20.0: 1.0}
    zeros = auc([25.0, 25.0], (5.0, 10.0, 20.0))
    assert all(v == 0.0 for v in zeros.values())
    hand = auc([1.0, 3.0, 30.0], (5.0,))
    assert abs(hand[5.0] - 0.4) < 1e-12


def test_auc_monotone_in_threshold():
    rng = np.random.default_rng(15)
    for _ in range(20):
        errors = rng.uniform(0, 60, size=rng.integers(1, 40))
        taus = [2.0, 5.0, 10.0, 20.0, 40.0]
        values = auc(errors, taus)
        seq = [values[t] for t in taus]
        assert all(a <= b + 1e-12 for a, b in zip(seq, seq[1:]))


def test_auc_empty_rejected():
    with pytest.raises(ContractError):
        auc([], (5.0,))
    with pytest.raises(ContractError):
        auc([np.inf], (5.0,))


def test_relative_pose_validation():
    with pytest.raises(ContractError):
        RelativePose(np.eye(3), np.array([1.0, 1.0, 0.0]))
