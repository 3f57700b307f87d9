"""Acceptance suite: one test per release criterion, at stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion. Criteria with runtime budgets assert them.
"""

import contextlib
import filecmp
import io
import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from semmatch.cache import FeatureCache, _encode
from semmatch.cli import main
from semmatch.conditioning import CorrelationMatrix, match_pair, mnn
from semmatch.features import (
    DenseSemanticMap,
    GeneratorConfig,
    KeypointSet,
    RawDescriptors,
    RefinedFeatures,
    generate_synthetic_pair,
    l2_normalize,
    sample_semantic,
    save_interchange,
)
from semmatch.pipeline import RunConfig, extract_file, load_model
from semmatch.pose import RansacConfig, auc, estimate_essential, pose_error, recover_pose
from semmatch.reasoning import ReasoningConfig, init_weights, refine, save_weights
from semmatch.reasoning.gradcheck import standard_check
from semmatch.supervision import dual_softmax_loss, matching_metrics
from semmatch.supervision.train import holdout_precision, toy_mechanism_config, train

from twoview import make_scene, write_scene_files


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE FAIL: {name}")
        raise
    print(f"ACCEPTANCE PASS: {name}")


def brute_force_mnn(values, min_score=0.0):
    n1, _ = values.shape
    out = set()
    for i in range(n1):
        j = int(np.argmax(values[i]))
        if int(np.argmax(values[:, j])) == i and values[i, j] > min_score:
            out.add((i, j))
    return out


def test_mnn_oracle_equivalence():
    with criterion("MNN oracle equivalence (1000 matrices up to 256x256, <10s)"):
        rng = np.random.default_rng(0)
        start = time.perf_counter()
        for _ in range(1000):
            n1 = int(rng.integers(1, 257))
            n2 = int(rng.integers(1, 257))
            values = rng.standard_normal((n1, n2))
            got = mnn(CorrelationMatrix(values)).as_set()
            assert got == brute_force_mnn(values)
        elapsed = time.perf_counter() - start
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_conditioning_identity():
    with criterion("Conditioning identity (all-ones C_s == texture-only, 100 sets)"):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n1 = int(rng.integers(1, 60))
            n2 = int(rng.integers(1, 60))
            d = int(rng.integers(2, 16))
            pts1 = rng.uniform((0, 0), (99.9, 99.9), (n1, 2))
            pts2 = rng.uniform((0, 0), (99.9, 99.9), (n2, 2))
            e0 = np.zeros((1, d), dtype=np.float32)
            e0[0, 0] = 1.0
            f1 = RefinedFeatures(
                KeypointSet(pts1, np.ones(n1), 100, 100),
                l2_normalize(rng.standard_normal((n1, d))).astype(np.float32),
                np.repeat(e0, n1, axis=0),
            )
            f2 = RefinedFeatures(
                KeypointSet(pts2, np.ones(n2), 100, 100),
                l2_normalize(rng.standard_normal((n2, d))).astype(np.float32),
                np.repeat(e0, n2, axis=0),
            )
            conditioned = match_pair(f1, f2)
            texture = match_pair(f1, f2, texture_only=True)
            assert conditioned.as_set() == texture.as_set()


def test_gradient_check():
    with criterion("Gradient check (N=8, d=16, h=2, 2 layers; rel err < 1e-5, <60s)"):
        start = time.perf_counter()
        report = standard_check(seed=0, step=1e-3)
        elapsed = time.perf_counter() - start
        assert report.max_rel_err < 1e-5, f"max rel err {report.max_rel_err:.3e}"
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_dual_softmax_hand_value():
    with criterion("Dual-softmax hand value (identity 2x2 -> 1.25304 +- 1e-4)"):
        loss = dual_softmax_loss(np.eye(2), np.array([[0, 0], [1, 1]]), inv_temperature=1.0)
        assert abs(loss - 1.25304) < 1e-4


def test_mechanism_reproduction():
    with criterion(
        "Mechanism reproduction (texture-only <0.60 -> trained conditioned >0.95, <5min)"
    ):
        config = toy_mechanism_config()
        assert config.steps <= 500
        holdout_seed_offset = 10_000_019
        holdout = generate_synthetic_pair(config.generator, 0 + holdout_seed_offset)

        texture_only = match_pair_texture_precision(holdout)
        assert texture_only < 0.60, f"texture-only precision {texture_only:.3f}"

        start = time.perf_counter()
        result = train(config, seed=0)
        elapsed = time.perf_counter() - start
        assert result.final_precision > 0.95, f"final precision {result.final_precision:.3f}"
        assert elapsed < 300.0, f"took {elapsed:.0f}s"

        # smoothed loss trends downward: 10-step moving averages, late < early
        losses = np.array([m.loss for m in result.metrics])
        smooth = np.convolve(losses, np.ones(10) / 10, mode="valid")
        assert smooth[-1] < smooth[0]
        half = len(smooth) // 2
        assert smooth[half:].mean() <= smooth[:half].mean()

        print(
            f"  texture-only {texture_only:.3f}, conditioned init "
            f"{result.initial_precision:.3f} -> trained {result.final_precision:.3f} "
            f"({elapsed:.0f}s)"
        )


def match_pair_texture_precision(scene):
    t1 = l2_normalize(scene.view1.texture.matrix.astype(np.float64))
    t2 = l2_normalize(scene.view2.texture.matrix.astype(np.float64))
    from semmatch.conditioning import correlation

    matches = mnn(correlation(t1, t2))
    return matching_metrics(matches, scene.gt).precision


def test_reasoning_invariants():
    with criterion("Reasoning invariants (identity-at-init exact, equivariance 1e-5, unit trace)"):
        config = ReasoningConfig(dim=32, n_layers=3, heads=4, texture_dim=12, semantic_dim=10)
        weights = init_weights(config, seed=2)
        rng = np.random.default_rng(3)
        n = 24
        pts = rng.uniform((0, 0), (127.9, 127.9), (n, 2))
        kps = KeypointSet(pts, np.ones(n), 128, 128)
        raw_t = rng.standard_normal((n, 12))
        raw_s = rng.standard_normal((n, 10))

        refined, trace = refine(
            kps, RawDescriptors(raw_t, "texture"), RawDescriptors(raw_s, "semantic"), weights
        )
        w = np.asarray(weights.texture_proj.weight, np.float64)
        b = np.asarray(weights.texture_proj.bias, np.float64)
        assert np.array_equal(refined.d_t, l2_normalize(raw_t @ w + b).astype(np.float32))

        # permutation equivariance on perturbed weights (non-trivial layers)
        perturbed = weights.astype(np.float64)
        rng2 = np.random.default_rng(4)
        for name, arr in perturbed.named_tensors():
            if name != "log_inv_temperature":
                arr += 0.1 * rng2.standard_normal(arr.shape)
        out, trace = refine(
            kps, RawDescriptors(raw_t, "texture"), RawDescriptors(raw_s, "semantic"), perturbed
        )
        perm = rng.permutation(n)
        out_p, _ = refine(
            KeypointSet(pts[perm], np.ones(n), 128, 128),
            RawDescriptors(raw_t[perm], "texture"),
            RawDescriptors(raw_s[perm], "semantic"),
            perturbed,
        )
        assert np.max(np.abs(out_p.d_t.astype(np.float64) - out.d_t.astype(np.float64)[perm])) < 1e-5
        assert np.max(np.abs(out_p.d_s.astype(np.float64) - out.d_s.astype(np.float64)[perm])) < 1e-5

        assert len(trace) == config.n_layers
        for mats in (trace.texture, trace.semantic):
            for mat in mats:
                assert np.max(np.abs(np.linalg.norm(mat, axis=1) - 1.0)) < 1e-5


def test_pose_oracle():
    with criterion("Pose oracle (20 scenes <0.1deg; 50% outliers >=96% inliers; AUC 0.400)"):
        for seed in range(20):
            scene = make_scene(seed, n_points=50)
            est = estimate_essential(
                scene.uv1, scene.uv2, scene.intrinsics, scene.intrinsics, RansacConfig(seed=seed)
            )
            pose = recover_pose(est)
            err = pose_error(pose, scene.relative)
            assert err.rotation_error_deg < 0.1, f"seed {seed}: rot {err.rotation_error_deg}"
            assert err.translation_error_deg < 0.1, f"seed {seed}: trans {err.translation_error_deg}"

        rng = np.random.default_rng(99)
        recovered = []
        for seed in range(5):
            scene = make_scene(100 + seed, n_points=50)
            bad1 = rng.uniform((0, 0), (scene.width, scene.height), (50, 2))
            bad2 = rng.uniform((0, 0), (scene.width, scene.height), (50, 2))
            est = estimate_essential(
                np.concatenate([scene.uv1, bad1]),
                np.concatenate([scene.uv2, bad2]),
                scene.intrinsics,
                scene.intrinsics,
                RansacConfig(seed=seed),
            )
            recovered.append(int(est.inliers[:50].sum()))
        assert all(r >= 48 for r in recovered), f"recovered {recovered}"

        hand = auc([1.0, 3.0, 30.0], (5.0,))[5.0]
        assert abs(hand - 0.400) < 1e-6


def test_bicubic_properties():
    with criterion("Bicubic properties (knots exact, linearity 1e-5, affine 1e-4)"):
        rng = np.random.default_rng(5)
        # knot reproduction, exact
        gh = gw = 8
        grid_values = rng.standard_normal((gh, gw, 3)).astype(np.float32)
        grid = DenseSemanticMap(grid_values, gw, gh)
        pts = [(x, y) for x in range(2, 6) for y in range(2, 6)]
        kps = KeypointSet(np.array(pts, dtype=np.float64), np.ones(len(pts)), gw, gh)
        sampled = sample_semantic(grid, kps)
        for (x, y), row in zip(pts, sampled.matrix):
            assert np.array_equal(row, grid_values[y, x])

        # linearity
        w = h = 64
        a = rng.standard_normal((9, 11, 5)).astype(np.float32)
        b = rng.standard_normal((9, 11, 5)).astype(np.float32)
        query = rng.uniform((0, 0), (w - 1e-3, h - 1e-3), (50, 2))
        kq = KeypointSet(query, np.ones(50), w, h)
        mixed = sample_semantic(DenseSemanticMap(0.6 * a - 1.7 * b, w, h), kq).matrix
        split = (
            0.6 * sample_semantic(DenseSemanticMap(a, w, h), kq).matrix
            - 1.7 * sample_semantic(DenseSemanticMap(b, w, h), kq).matrix
        )
        assert np.max(np.abs(mixed - split)) < 1e-5

        # affine reproduction away from borders
        gh2, gw2 = 12, 16
        w2, h2 = 160, 120
        gx_idx, gy_idx = np.meshgrid(
            np.arange(gw2, dtype=np.float64), np.arange(gh2, dtype=np.float64)
        )
        affine_grid = np.stack([1.5 * gx_idx + 0.25 * gy_idx - 2.0, gx_idx - gy_idx], axis=2)
        margin_x, margin_y = w2 / gw2 * 2, h2 / gh2 * 2
        pts2 = rng.uniform((margin_x, margin_y), (w2 - margin_x, h2 - margin_y), (64, 2))
        kps2 = KeypointSet(pts2, np.ones(64), w2, h2)
        out = sample_semantic(DenseSemanticMap(affine_grid, w2, h2), kps2).matrix
        gx = (pts2[:, 0] + 0.5) * gw2 / w2 - 0.5
        gy = (pts2[:, 1] + 0.5) * gh2 / h2 - 0.5
        expected = np.stack([1.5 * gx + 0.25 * gy - 2.0, gx - gy], axis=1)
        assert np.max(np.abs(out - expected)) < 1e-4


def _workspace(tmp_path, seed=3):
    gen = GeneratorConfig(
        n_keypoints=48, n_regions=4, texture_dim=16, semantic_channels=16,
        noise=0.05, dropout=0.1, semantic_noise=1.0,
    )
    pair = generate_synthetic_pair(gen, seed=seed)
    save_interchange(tmp_path / "img1.scf", pair.view1.keypoints, pair.view1.texture, pair.view1.semantic_map)
    save_interchange(tmp_path / "img2.scf", pair.view2.keypoints, pair.view2.texture, pair.view2.semantic_map)
    weights = init_weights(
        ReasoningConfig(dim=32, n_layers=2, heads=2, texture_dim=16, semantic_dim=16), seed=0
    )
    save_weights(weights, tmp_path / "weights.scw")
    return RunConfig(
        weights=str(tmp_path / "weights.scw"),
        cache_root=str(tmp_path / "cache"),
        dim=32,
        n_layers=2,
        heads=2,
    )


def test_cache_criteria(tmp_path):
    with criterion("Cache (round trip, concurrent stress, extract-twice == extract-then-get)"):
        import threading

        config = _workspace(tmp_path)
        model = load_model(config)

        # fresh extraction
        res1, feat1 = extract_file(tmp_path / "img1.scf", config, model)
        assert not res1.cache_hit
        # extract again: served from cache, bit-exact
        res2, feat2 = extract_file(tmp_path / "img1.scf", config, model)
        assert res2.cache_hit
        assert _encode(feat1) == _encode(feat2)
        # recompute from scratch in a separate cache: bit-exact with the cached one
        config_b = RunConfig(**{**config.__dict__, "cache_root": str(tmp_path / "cache_b")})
        model_b = load_model(config_b)
        res3, feat3 = extract_file(tmp_path / "img1.scf", config_b, model_b)
        assert not res3.cache_hit
        assert _encode(feat1) == _encode(feat3)
        assert res1.key == res3.key

        # direct get equals stored
        direct = model.cache.get(res1.key)
        assert _encode(direct) == _encode(feat1)

        # concurrent writers + validating readers
        cache = FeatureCache(tmp_path / "stress")
        key = "dd" * 32
        blob_a, blob_b = _encode(feat1), _encode(feat3)
        stop = threading.Event()
        failures = []

        def writer(feat):
            while not stop.is_set():
                cache.put(key, feat)

        def reader():
            seen = 0
            while not stop.is_set() or seen == 0:
                got = cache.get(key)
                if got is None:
                    continue
                seen += 1
                if _encode(got) not in (blob_a, blob_b):
                    failures.append("torn")
                    stop.set()
                    return

        threads = [
            threading.Thread(target=writer, args=(feat1,)),
            threading.Thread(target=writer, args=(feat3,)),
            threading.Thread(target=reader),
            threading.Thread(target=reader),
        ]
        for t in threads:
            t.start()
        timer = threading.Timer(2.0, stop.set)
        timer.start()
        for t in threads:
            t.join(timeout=30)
        timer.cancel()
        assert not failures


def _run_cli(argv):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        rc = main(argv)
    return rc, buf.getvalue()


def _tree_bytes(root: Path) -> dict[str, bytes]:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = path.read_bytes()
    return out


def test_cli_determinism(tmp_path):
    with criterion("Determinism (every CLI command byte-identical across two seeded runs)"):
        outputs = []
        for run in ("run1", "run2"):
            root = tmp_path / run
            root.mkdir()
            cwd = os.getcwd()
            try:
                os.chdir(root)
                # identical inputs, laid out relative so stdout is comparable
                gen = GeneratorConfig(
                    n_keypoints=48, n_regions=4, texture_dim=16, semantic_channels=16,
                    noise=0.05, dropout=0.1, semantic_noise=1.0,
                )
                pair = generate_synthetic_pair(gen, seed=3)
                save_interchange("img1.scf", pair.view1.keypoints, pair.view1.texture, pair.view1.semantic_map)
                save_interchange("img2.scf", pair.view2.keypoints, pair.view2.texture, pair.view2.semantic_map)
                scene = make_scene(seed=5, n_points=60)
                paths = write_scene_files(scene, Path("."), "sc0", semantic_channels=16)

                transcript = []

                # train (small) produces the weights used downstream
                train_cfg = {
                    "steps": 3, "batch_size": 1, "lr": 1e-3, "dim": 32, "n_layers": 2,
                    "heads": 2,
                    "generator": {
                        "n_keypoints": 48, "n_regions": 4, "texture_dim": 16,
                        "semantic_channels": 16, "noise": 0.05, "dropout": 0.1,
                        "semantic_noise": 1.0,
                    },
                }
                Path("train.json").write_text(json.dumps(train_cfg))
                rc, out = _run_cli([
                    "train", "--train-config", "train.json", "--seed", "7",
                    "--out", "trained.scw", "--log", "train.csv",
                ])
                assert rc == 0
                transcript.append(out)

                flags = ["--weights", "trained.scw", "--cache-root", "cache",
                         "--dim", "32", "--layers", "2", "--heads", "2", "--seed", "0"]
                rc, out = _run_cli(["extract", *flags, "img1.scf", "img2.scf"])
                assert rc == 0
                transcript.append(out)

                Path("pairs.json").write_text(json.dumps(
                    [{"name": "p0", "a": "img1.scf", "b": "img2.scf"}]
                ))
                rc, out = _run_cli(["match", *flags, "pairs.json", "--out-dir", "matches"])
                assert rc == 0
                transcript.append(out)

                # eval against the geometry-backed scene pair
                wflags = ["--weights", "trained.scw", "--cache-root", "cache",
                          "--dim", "32", "--layers", "2", "--heads", "2", "--seed", "0"]
                Path("mp.json").write_text(json.dumps(
                    [{"name": "sc0", "a": "sc0_a.scf", "b": "sc0_b.scf"}]
                ))
                rc, out = _run_cli(["match", *wflags, "mp.json", "--out-dir", "matches"])
                assert rc == 0
                transcript.append(out)
                Path("ep.json").write_text(json.dumps([
                    {"name": "sc0", "a": "sc0_a.scf", "b": "sc0_b.scf",
                     "matches": "matches/sc0.matches.txt", "geometry": "sc0.geom"}
                ]))
                rc, out = _run_cli([
                    "eval", *wflags, "ep.json", "--out-csv", "eval.csv",
                    "--out-json", "eval.json",
                ])
                assert rc == 0
                transcript.append(out)

                rc, out = _run_cli([
                    "gradcheck", "--seed", "0", "--keypoints", "4", "--dim", "8", "--layers", "1",
                ])
                assert rc == 0
                transcript.append(out)

                rc, out = _run_cli([
                    "viz", *flags, "--a", "img1.scf", "--b", "img2.scf",
                    "--matches", "matches/p0.matches.txt", "--out", "viz.svg",
                ])
                assert rc == 0
                transcript.append(out)
                rc, out = _run_cli([
                    "viz", *flags, "--a", "img1.scf", "--b", "img2.scf",
                    "--mode", "heatmap", "--query", "2", "--top-k", "16", "--out", "heat.svg",
                ])
                assert rc == 0
                transcript.append(out)
            finally:
                os.chdir(cwd)
            outputs.append(("".join(transcript), _tree_bytes(root)))

        (stdout1, tree1), (stdout2, tree2) = outputs
        assert stdout1 == stdout2
        assert tree1.keys() == tree2.keys()
        for name in tree1:
            assert tree1[name] == tree2[name], f"{name} differs between runs"
