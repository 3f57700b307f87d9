import numpy as np
import pytest

from semmatch.errors import (
    BadMagicError,
    ContractError,
    NonFiniteValueError,
    ParseError,
    TruncatedPayloadError,
)
from semmatch.features import (
    DenseSemanticMap,
    GeneratorConfig,
    KeypointSet,
    RawDescriptors,
    generate_synthetic_pair,
    l2_normalize,
    load_interchange,
    oracle_semantic_descriptors,
    project_raw,
    sample_semantic,
    save_interchange,
)
from semmatch.conditioning import condition, correlation, mnn
from semmatch.supervision import matching_metrics


def make_bundle(rng, n=32, d_in=16, gh=12, gw=10, c=6, w=200, h=160):
    pts = rng.uniform((0, 0), (w - 1e-3, h - 1e-3), size=(n, 2))
    kps = KeypointSet(pts, rng.uniform(0, 1, n), w, h)
    tex = RawDescriptors(rng.standard_normal((n, d_in)).astype(np.float32), "texture")
    grid = DenseSemanticMap(rng.standard_normal((gh, gw, c)).astype(np.float32), w, h)
    return kps, tex, grid


# ---------------------------------------------------------------------------
# interchange format


def test_interchange_header_echo(tmp_path):
    rng = np.random.default_rng(0)
    kps, tex, grid = make_bundle(rng, n=2048, d_in=64, gh=64, gw=64, c=384, w=640, h=480)
    path = tmp_path / "big.scf"
    save_interchange(path, kps, tex, grid)
    kps2, tex2, grid2 = load_interchange(path)
    assert len(kps2) == 2048 and tex2.matrix.shape == (2048, 64)
    assert grid2.grid.shape == (64, 64, 384)
    assert (kps2.image_width, kps2.image_height) == (640, 480)


def test_interchange_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    kps, tex, grid = make_bundle(rng)
    p1, p2 = tmp_path / "a.scf", tmp_path / "b.scf"
    save_interchange(p1, kps, tex, grid)
    save_interchange(p2, *load_interchange(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_interchange_bad_magic(tmp_path):
    rng = np.random.default_rng(2)
    path = tmp_path / "x.scf"
    save_interchange(path, *make_bundle(rng))
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(BadMagicError) as err:
        load_interchange(path)
    assert err.value.offset == 0


def test_interchange_truncation_names_offset(tmp_path):
    rng = np.random.default_rng(3)
    path = tmp_path / "x.scf"
    save_interchange(path, *make_bundle(rng))
    data = path.read_bytes()[:-4]
    path.write_bytes(data)
    with pytest.raises(TruncatedPayloadError) as err:
        load_interchange(path)
    assert err.value.offset == len(data)
    assert str(len(data)) in str(err.value)


def test_interchange_trailing_data(tmp_path):
    rng = np.random.default_rng(4)
    path = tmp_path / "x.scf"
    save_interchange(path, *make_bundle(rng))
    path.write_bytes(path.read_bytes() + b"\x00\x00\x00\x00")
    with pytest.raises(ParseError):
        load_interchange(path)


def test_interchange_non_finite_names_offset(tmp_path):
    rng = np.random.default_rng(5)
    kps, tex, grid = make_bundle(rng, n=4, d_in=3, gh=2, gw=2, c=2)
    path = tmp_path / "x.scf"
    save_interchange(path, kps, tex, grid)
    data = bytearray(path.read_bytes())
    # poison texture element 1: header(36) + points(4*2*4) + scores(4*4) + 4
    offset = 36 + 32 + 16 + 4
    data[offset : offset + 4] = np.array([np.nan], "<f4").tobytes()
    path.write_bytes(bytes(data))
    with pytest.raises(NonFiniteValueError) as err:
        load_interchange(path)
    assert err.value.offset == offset
    assert "texture" in str(err.value)


# ---------------------------------------------------------------------------
# bicubic sampling


def catmull_rom_weight(s: float) -> float:
    # independent scalar kernel, a = -0.5
    s = abs(s)
    if s <= 1.0:
        return 1.5 * s**3 - 2.5 * s**2 + 1.0
    if s < 2.0:
        return -0.5 * s**3 + 2.5 * s**2 - 4.0 * s + 2.0
    return 0.0


def sample_oracle(grid: np.ndarray, gx: float, gy: float) -> np.ndarray:
    # direct 16-tap evaluation with clamp-to-edge
    gh, gw, _ = grid.shape
    x0, y0 = int(np.floor(gx)), int(np.floor(gy))
    out = np.zeros(grid.shape[2])
    for dy in range(-1, 3):
        for dx in range(-1, 3):
            wx = catmull_rom_weight(gx - (x0 + dx))
            wy = catmull_rom_weight(gy - (y0 + dy))
            iy = min(max(y0 + dy, 0), gh - 1)
            ix = min(max(x0 + dx, 0), gw - 1)
            out += wx * wy * grid[iy, ix]
    return out


def test_sampling_constant_map():
    grid = DenseSemanticMap(np.full((6, 7, 3), 3.0, dtype=np.float32), 70, 60)
    kps = KeypointSet(np.array([[1.2, 3.4], [60.9, 55.5], [0.0, 0.0]]), [1, 1, 1], 70, 60)
    sampled = sample_semantic(grid, kps)
    assert np.allclose(sampled.matrix, 3.0, atol=1e-6)


def test_sampling_knot_reproduction_exact():
    rng = np.random.default_rng(6)
    gh, gw, c = 8, 8, 4
    grid_values = rng.standard_normal((gh, gw, c)).astype(np.float32)
    # same-size grid and image: keypoint (i, j) lands exactly on cell (i, j)
    grid = DenseSemanticMap(grid_values, gw, gh)
    pts = [(x, y) for x in range(2, 6) for y in range(2, 6)]
    kps = KeypointSet(np.array(pts, dtype=np.float64), np.ones(len(pts)), gw, gh)
    sampled = sample_semantic(grid, kps)
    for (x, y), row in zip(pts, sampled.matrix):
        assert np.array_equal(row, grid_values[y, x])


def test_sampling_matches_hand_oracle():
    rng = np.random.default_rng(7)
    grid_values = rng.standard_normal((4, 4, 1)).astype(np.float32)
    w, h = 40, 40
    grid = DenseSemanticMap(grid_values, w, h)
    pts = np.array([[13.7, 22.1], [5.0, 5.0], [33.3, 8.8]])
    kps = KeypointSet(pts, np.ones(len(pts)), w, h)
    sampled = sample_semantic(grid, kps)
    for (x, y), got in zip(pts, sampled.matrix):
        gx = (x + 0.5) * 4 / w - 0.5
        gy = (y + 0.5) * 4 / h - 0.5
        expected = sample_oracle(grid_values.astype(np.float64), gx, gy)
        assert np.allclose(got, expected, atol=1e-6)


def test_sampling_linearity():
    rng = np.random.default_rng(8)
    w = h = 64
    a = rng.standard_normal((9, 11, 5)).astype(np.float32)
    b = rng.standard_normal((9, 11, 5)).astype(np.float32)
    pts = rng.uniform((0, 0), (w - 1e-3, h - 1e-3), size=(40, 2))
    kps = KeypointSet(pts, np.ones(40), w, h)
    alpha, beta = 0.7, -1.3
    mixed = sample_semantic(DenseSemanticMap(alpha * a + beta * b, w, h), kps).matrix
    separate = alpha * sample_semantic(DenseSemanticMap(a, w, h), kps).matrix + beta * sample_semantic(
        DenseSemanticMap(b, w, h), kps
    ).matrix
    assert np.max(np.abs(mixed - separate)) < 1e-5


def test_sampling_reproduces_affine_ramp():
    # channels are affine in grid coordinates; Catmull-Rom reproduces them
    gh, gw = 12, 16
    w, h = 160, 120
    gx_idx, gy_idx = np.meshgrid(np.arange(gw, dtype=np.float64), np.arange(gh, dtype=np.float64))
    grid = np.stack([2.0 * gx_idx - 0.5 * gy_idx + 1.0, gy_idx], axis=2)
    rng = np.random.default_rng(9)
    # stay away from borders: one full cell margin
    pts = rng.uniform((w / gw * 2, h / gh * 2), (w - w / gw * 2, h - h / gh * 2), size=(64, 2))
    kps = KeypointSet(pts, np.ones(64), w, h)
    sampled = sample_semantic(DenseSemanticMap(grid, w, h), kps).matrix
    gx = (pts[:, 0] + 0.5) * gw / w - 0.5
    gy = (pts[:, 1] + 0.5) * gh / h - 0.5
    expected = np.stack([2.0 * gx - 0.5 * gy + 1.0, gy], axis=1)
    assert np.max(np.abs(sampled - expected)) < 1e-4


def test_sampling_size_mismatch():
    grid = DenseSemanticMap(np.ones((4, 4, 2), dtype=np.float32), 100, 100)
    kps = KeypointSet(np.array([[5.0, 5.0]]), [1.0], 128, 100)
    with pytest.raises(ContractError):
        sample_semantic(grid, kps)


# ---------------------------------------------------------------------------
# projection and normalization


def test_project_identity():
    raw = RawDescriptors(np.random.default_rng(0).standard_normal((5, 4)), "texture")
    out = project_raw(raw, np.eye(4), np.zeros(4))
    assert np.allclose(out, raw.matrix)


def test_project_zero_matrix_gives_bias():
    raw = RawDescriptors(np.ones((3, 4)), "texture")
    bias = np.array([1.0, -2.0, 3.0])
    out = project_raw(raw, np.zeros((4, 3)), bias)
    assert np.allclose(out, np.tile(bias, (3, 1)))


def test_project_matches_naive_matmul():
    rng = np.random.default_rng(10)
    raw = RawDescriptors(rng.standard_normal((6, 8)), "texture")
    weight = rng.standard_normal((8, 4))
    bias = rng.standard_normal(4)
    got = project_raw(raw, weight, bias)
    expected = np.zeros((6, 4))
    for i in range(6):
        for j in range(4):
            acc = bias[j]
            for k in range(8):
                acc += raw.matrix[i, k] * weight[k, j]
            expected[i, j] = acc
    assert np.max(np.abs(got - expected)) < 1e-6


def test_project_dim_mismatch():
    raw = RawDescriptors(np.ones((2, 5)), "texture")
    with pytest.raises(ContractError):
        project_raw(raw, np.eye(4), np.zeros(4))


def test_l2_normalize_cases():
    out = l2_normalize(np.array([[3.0, 4.0]]))
    assert np.allclose(out, [[0.6, 0.8]])
    unit = np.array([[1.0, 0.0, 0.0]])
    assert np.max(np.abs(l2_normalize(unit) - unit)) < 1e-7
    zero = l2_normalize(np.zeros((2, 3)))
    assert np.array_equal(zero, np.zeros((2, 3)))
    rng = np.random.default_rng(11)
    x = rng.standard_normal((10, 6))
    once = l2_normalize(x)
    assert np.allclose(l2_normalize(once), once, atol=1e-12)


# ---------------------------------------------------------------------------
# synthetic generator


def pair_texture_precision(pair):
    t1 = l2_normalize(pair.view1.texture.matrix.astype(np.float64))
    t2 = l2_normalize(pair.view2.texture.matrix.astype(np.float64))
    return matching_metrics(mnn(correlation(t1, t2)), pair.gt).precision


def test_generator_deterministic():
    cfg = GeneratorConfig(n_keypoints=64, n_regions=4, texture_dim=8, semantic_channels=8)
    a = generate_synthetic_pair(cfg, seed=5)
    b = generate_synthetic_pair(cfg, seed=5)
    assert np.array_equal(a.view1.keypoints.points, b.view1.keypoints.points)
    assert np.array_equal(a.view1.texture.matrix, b.view1.texture.matrix)
    assert np.array_equal(a.view1.semantic_map.grid, b.view1.semantic_map.grid)
    assert np.array_equal(a.view2.texture.matrix, b.view2.texture.matrix)
    assert np.array_equal(a.gt.pairs, b.gt.pairs)


def test_generator_noiseless_ambiguity():
    cfg = GeneratorConfig(
        n_keypoints=256, n_regions=8, texture_dim=32, semantic_channels=16, noise=0.0, dropout=0.0
    )
    pair = generate_synthetic_pair(cfg, seed=12)
    assert pair_texture_precision(pair) <= 0.6
    t1 = l2_normalize(pair.view1.texture.matrix.astype(np.float64))
    t2 = l2_normalize(pair.view2.texture.matrix.astype(np.float64))
    s1, s2 = oracle_semantic_descriptors(pair)
    conditioned = mnn(condition(correlation(t1, t2), correlation(s1, s2, "semantic")))
    assert matching_metrics(conditioned, pair.gt).precision == 1.0


def test_generator_dropout_count():
    cfg = GeneratorConfig(n_keypoints=400, n_regions=8, texture_dim=8, semantic_channels=8, dropout=0.25)
    pair = generate_synthetic_pair(cfg, seed=13)
    assert len(pair.gt) == 300
    assert len(pair.view2.keypoints) == 300


def test_generator_contract_errors():
    with pytest.raises(ContractError):
        GeneratorConfig(n_regions=1)
    with pytest.raises(ContractError):
        GeneratorConfig(n_keypoints=10, n_regions=8)
    with pytest.raises(ContractError):
        GeneratorConfig(n_keypoints=33, n_regions=4)


def test_generator_regions_and_gt_valid():
    cfg = GeneratorConfig(n_keypoints=64, n_regions=4, texture_dim=8, semantic_channels=8, dropout=0.2)
    pair = generate_synthetic_pair(cfg, seed=14)
    assert pair.regions1.min() >= 0 and pair.regions1.max() < 4
    # twins sit in different regions
    assert np.all(pair.regions1[0::2] != pair.regions1[1::2])
    # GT maps view-1 survivors to their view-2 positions
    for i, j in pair.gt.pairs:
        d = np.linalg.norm(
            pair.view1.keypoints.points[i].astype(np.float64)
            - pair.view2.keypoints.points[j].astype(np.float64)
        )
        assert d <= np.sqrt(2.0) + 1e-6
