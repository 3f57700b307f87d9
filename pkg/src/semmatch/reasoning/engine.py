"""Forward and backward passes of the descriptor-refinement stack.

Architecture per layer (LightGlue-style cross-attention block): multi-head
scaled dot-product attention whose keys come from a fixed anchor set and
whose queries AND values come from the evolving stream, followed by the
residual update

    x <- x + mlp([x || message]),  mlp = affine(2d,2d) . layernorm . gelu . affine(2d,d)

The texture stream alternates its key anchors between the projected raw
semantic set (even layers, counting from 0) and the projected raw texture
set (odd layers); the semantic stream always keys on the raw semantic
anchors. The stream itself is never re-normalized between layers; after
every layer a unit-normalized snapshot of both streams is recorded in the
trace, and the last snapshot is the refined output. A zero-initialized
stack therefore maps any input to exactly the normalized projection.

All math here runs in float64 regardless of the storage dtype, and every
backward is hand-derived so gradients are exact (they are checked against
central finite differences in the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError
from ..features import KeypointSet, RawDescriptors, RefinedFeatures
from .weights import AttentionLayerParams, ReasoningWeights

_LN_EPS = 1e-5
_GELU_C = 0.7978845608028654  # sqrt(2 / pi)
_GELU_B = 0.044715
_NORM_EPS = 1e-12


@dataclass
class LayerTrace:
    """Unit-normalized per-layer snapshots of both streams, for deep supervision."""

    texture: list[np.ndarray] = field(default_factory=list)  # each (N, d)
    semantic: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.texture)


# ---------------------------------------------------------------------------
# primitive blocks (forward returns a cache consumed by the matching backward)


def _affine_fwd(x, p):
    w = np.asarray(p.weight, dtype=np.float64)
    b = np.asarray(p.bias, dtype=np.float64)
    return x @ w + b, (x, w)


def _affine_bwd(dy, cache, grads, prefix):
    x, w = cache
    grads[f"{prefix}.weight"] += x.T @ dy
    grads[f"{prefix}.bias"] += dy.sum(axis=0)
    return dy @ w.T


def _layernorm_fwd(x, p):
    gain = np.asarray(p.gain, dtype=np.float64)
    bias = np.asarray(p.bias, dtype=np.float64)
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    istd = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = xc * istd
    return gain * xhat + bias, (xhat, istd, gain)


def _layernorm_bwd(dy, cache, grads, prefix):
    xhat, istd, gain = cache
    grads[f"{prefix}.gain"] += (dy * xhat).sum(axis=0)
    grads[f"{prefix}.bias"] += dy.sum(axis=0)
    dxhat = dy * gain
    d = xhat.shape[1]
    return (istd / d) * (
        d * dxhat - dxhat.sum(axis=1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
    )


def _gelu_fwd(x):
    inner = _GELU_C * (x + _GELU_B * (x * x * x))
    t = np.tanh(inner)
    return 0.5 * x * (1.0 + t), (x, t)


def _gelu_bwd(dy, cache):
    x, t = cache
    local = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_B * x * x)
    return dy * local


def _l2norm_fwd(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    denom = np.maximum(norms, _NORM_EPS)
    y = x / denom
    return y, (y, denom)


def _l2norm_bwd(dy, cache):
    y, denom = cache
    return (dy - y * (y * dy).sum(axis=1, keepdims=True)) / denom


def _split_heads(x, heads):
    n, d = x.shape
    return x.reshape(n, heads, d // heads).transpose(1, 0, 2)  # (h, N, dh)


def _merge_heads(x):
    h, n, dh = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dh)


def _attention_fwd(x_k, x_qv, params: AttentionLayerParams, heads: int):
    q, cq = _affine_fwd(x_qv, params.query)
    k, ck = _affine_fwd(x_k, params.key)
    v, cv = _affine_fwd(x_qv, params.value)
    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scale = 1.0 / np.sqrt(qh.shape[2])
    scores = (qh @ kh.transpose(0, 2, 1)) * scale
    scores -= scores.max(axis=2, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=2, keepdims=True)
    ctx = _merge_heads(attn @ vh)
    message, cm = _affine_fwd(ctx, params.out)
    u = np.concatenate([x_qv, message], axis=1)
    h1, c1 = _affine_fwd(u, params.mlp_hidden)
    ln, cln = _layernorm_fwd(h1, params.mlp_norm)
    act, cg = _gelu_fwd(ln)
    delta, c2 = _affine_fwd(act, params.mlp_out)
    y = x_qv + delta
    cache = (cq, ck, cv, qh, kh, vh, attn, scale, cm, c1, cln, cg, c2, x_qv.shape[1])
    return y, cache


def _attention_bwd(dy, cache, grads, prefix):
    cq, ck, cv, qh, kh, vh, attn, scale, cm, c1, cln, cg, c2, d = cache
    dx_qv = dy.copy()
    dact = _affine_bwd(dy, c2, grads, f"{prefix}.mlp_out")
    dln = _gelu_bwd(dact, cg)
    dh1 = _layernorm_bwd(dln, cln, grads, f"{prefix}.mlp_norm")
    du = _affine_bwd(dh1, c1, grads, f"{prefix}.mlp_hidden")
    dx_qv += du[:, :d]
    dctx = _affine_bwd(du[:, d:], cm, grads, f"{prefix}.out")
    heads = attn.shape[0]
    dctx_h = _split_heads(dctx, heads)
    dattn = dctx_h @ vh.transpose(0, 2, 1)
    dvh = attn.transpose(0, 2, 1) @ dctx_h
    dscores = attn * (dattn - (dattn * attn).sum(axis=2, keepdims=True)) * scale
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 2, 1) @ qh
    dx_qv += _affine_bwd(_merge_heads(dqh), cq, grads, f"{prefix}.query")
    dx_k = _affine_bwd(_merge_heads(dkh), ck, grads, f"{prefix}.key")
    dx_qv += _affine_bwd(_merge_heads(dvh), cv, grads, f"{prefix}.value")
    return dx_qv, dx_k


def attention_update(
    keys_source: np.ndarray,
    queries_values: np.ndarray,
    params: AttentionLayerParams,
    heads: int,
) -> np.ndarray:
    """One attention block: keys from keys_source, queries and values from queries_values."""
    keys_source = np.asarray(keys_source, dtype=np.float64)
    queries_values = np.asarray(queries_values, dtype=np.float64)
    if keys_source.shape[0] != queries_values.shape[0]:
        raise ContractError(
            f"key set has {keys_source.shape[0]} rows, query/value set has {queries_values.shape[0]}"
        )
    y, _ = _attention_fwd(keys_source, queries_values, params, heads)
    return y


# ---------------------------------------------------------------------------
# refinement stack


def _texture_keys(anchor_t, anchor_s, layer_index):
    return anchor_s if layer_index % 2 == 0 else anchor_t


def _refine_tape(weights: ReasoningWeights, raw_t: np.ndarray, raw_s: np.ndarray):
    """Run the stack, keeping every intermediate needed for the backward pass."""
    cfg = weights.config
    if raw_t.shape[0] != raw_s.shape[0]:
        raise ContractError(f"{raw_t.shape[0]} texture rows vs {raw_s.shape[0]} semantic rows")
    if raw_t.shape[1] != cfg.texture_dim or raw_s.shape[1] != cfg.semantic_dim:
        raise ContractError(
            f"raw dims ({raw_t.shape[1]}, {raw_s.shape[1]}) do not match config "
            f"({cfg.texture_dim}, {cfg.semantic_dim})"
        )
    anchor_t, cache_pt = _affine_fwd(raw_t, weights.texture_proj)
    anchor_s, cache_ps = _affine_fwd(raw_s, weights.semantic_proj)

    x_t, x_s = anchor_t, anchor_s
    attn_caches, norm_caches, trace_t, trace_s = [], [], [], []
    for i in range(cfg.n_layers):
        x_t, c_t = _attention_fwd(_texture_keys(anchor_t, anchor_s, i), x_t, weights.texture_layers[i], cfg.heads)
        x_s, c_s = _attention_fwd(anchor_s, x_s, weights.semantic_layers[i], cfg.heads)
        nt, cn_t = _l2norm_fwd(x_t)
        ns, cn_s = _l2norm_fwd(x_s)
        attn_caches.append((c_t, c_s))
        norm_caches.append((cn_t, cn_s))
        trace_t.append(nt)
        trace_s.append(ns)
    if cfg.n_layers == 0:
        final_t, final_cn_t = _l2norm_fwd(x_t)
        final_s, final_cn_s = _l2norm_fwd(x_s)
    else:
        final_t, final_s = trace_t[-1], trace_s[-1]
        final_cn_t = final_cn_s = None
    tape = {
        "proj_caches": (cache_pt, cache_ps),
        "attn_caches": attn_caches,
        "norm_caches": norm_caches,
        "final_norm_caches": (final_cn_t, final_cn_s),
    }
    return LayerTrace(trace_t, trace_s), (final_t, final_s), tape


def _refine_bwd(weights: ReasoningWeights, tape, trace_grads, grads):
    """Backpropagate per-layer trace gradients through the stack into `grads`."""
    cfg = weights.config
    attn_caches = tape["attn_caches"]
    norm_caches = tape["norm_caches"]

    d_anchor_t = None
    d_anchor_s = None
    g_t = None
    g_s = None
    for i in reversed(range(cfg.n_layers)):
        dtrace_t, dtrace_s = trace_grads[i]
        cn_t, cn_s = norm_caches[i]
        dt = _l2norm_bwd(dtrace_t, cn_t)
        ds = _l2norm_bwd(dtrace_s, cn_s)
        g_t = dt if g_t is None else g_t + dt
        g_s = ds if g_s is None else g_s + ds
        c_t, c_s = attn_caches[i]
        g_t, dk_t = _attention_bwd(g_t, c_t, grads, f"texture_layers.{i}")
        g_s, dk_s = _attention_bwd(g_s, c_s, grads, f"semantic_layers.{i}")
        if i % 2 == 0:
            d_anchor_s = dk_t if d_anchor_s is None else d_anchor_s + dk_t
        else:
            d_anchor_t = dk_t if d_anchor_t is None else d_anchor_t + dk_t
        d_anchor_s = dk_s if d_anchor_s is None else d_anchor_s + dk_s

    # The stream starts at the anchors, so stream gradients join anchor gradients.
    cache_pt, cache_ps = tape["proj_caches"]
    total_t = g_t if d_anchor_t is None else (d_anchor_t if g_t is None else g_t + d_anchor_t)
    total_s = g_s if d_anchor_s is None else (d_anchor_s if g_s is None else g_s + d_anchor_s)
    if total_t is not None:
        _affine_bwd(total_t, cache_pt, grads, "texture_proj")
    if total_s is not None:
        _affine_bwd(total_s, cache_ps, grads, "semantic_proj")


def refine(
    keypoints: KeypointSet,
    raw_t: RawDescriptors,
    raw_s: RawDescriptors,
    weights: ReasoningWeights,
) -> tuple[RefinedFeatures, LayerTrace]:
    """Refine one image's descriptors; returns float32 features plus the trace."""
    if len(raw_t) != len(raw_s):
        raise ContractError(f"{len(raw_t)} texture rows vs {len(raw_s)} semantic rows")
    if len(raw_t) != len(keypoints):
        raise ContractError(f"{len(raw_t)} descriptors for {len(keypoints)} keypoints")
    if len(keypoints) == 0:
        d = weights.config.dim
        empty = np.zeros((0, d), dtype=np.float32)
        return RefinedFeatures(keypoints, empty, empty), LayerTrace()
    trace, (final_t, final_s), _ = _refine_tape(
        weights,
        np.asarray(raw_t.matrix, dtype=np.float64),
        np.asarray(raw_s.matrix, dtype=np.float64),
    )
    refined = RefinedFeatures(keypoints, final_t.astype(np.float32), final_s.astype(np.float32))
    return refined, trace


# ---------------------------------------------------------------------------
# full training pass: deep dual-softmax loss and exact parameter gradients


@dataclass
class PairInputs:
    """Raw descriptor arrays of a training pair (both modalities, both images)."""

    raw_t1: np.ndarray
    raw_s1: np.ndarray
    raw_t2: np.ndarray
    raw_s2: np.ndarray


@dataclass
class ForwardBackwardResult:
    loss: float
    grads: dict[str, np.ndarray]
    empty_gt: bool
    trace1: LayerTrace
    trace2: LayerTrace


def zero_grads(weights: ReasoningWeights) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(np.asarray(arr, dtype=np.float64)) for name, arr in weights.named_tensors()}


def _dual_softmax_grad(c_f: np.ndarray, gt: np.ndarray, inv_t: float):
    """Loss and d(loss)/d(scaled scores) of the two-sided softmax NLL.

    Returns (loss, dS, row-softmax term count) where S = inv_t * c_f.
    Duplicate ground-truth rows are legal and simply count twice.
    """
    s = inv_t * c_f
    n1, n2 = s.shape
    rows = gt[:, 0]
    cols = gt[:, 1]
    row_max = s.max(axis=1, keepdims=True)
    lse_rows = (row_max[:, 0] + np.log(np.exp(s - row_max).sum(axis=1)))
    col_max = s.max(axis=0, keepdims=True)
    lse_cols = (col_max[0] + np.log(np.exp(s - col_max).sum(axis=0)))
    picked = s[rows, cols]
    loss = float((lse_rows[rows] - picked).sum() + (lse_cols[cols] - picked).sum())

    row_mult = np.bincount(rows, minlength=n1).astype(np.float64)
    col_mult = np.bincount(cols, minlength=n2).astype(np.float64)
    p_rows = np.exp(s - lse_rows[:, None])
    p_cols = np.exp(s - lse_cols[None, :])
    ds = row_mult[:, None] * p_rows + col_mult[None, :] * p_cols
    np.add.at(ds, (rows, cols), -2.0)
    return loss, ds


def forward_backward(
    pair: PairInputs,
    weights: ReasoningWeights,
    gt_pairs: np.ndarray,
) -> ForwardBackwardResult:
    """Deep-supervised loss over a pair plus exact gradients for every parameter.

    The loss is the mean over layers of the dual-softmax loss evaluated on the
    conditioned correlation of that layer's normalized snapshots. An empty
    ground-truth set yields loss 0 with zero gradients, flagged via empty_gt.
    """
    cfg = weights.config
    if cfg.n_layers == 0:
        raise ContractError("deep supervision requires at least one layer")
    gt_pairs = np.asarray(gt_pairs, dtype=np.int64).reshape(-1, 2)

    raw_t1 = np.asarray(pair.raw_t1, dtype=np.float64)
    raw_s1 = np.asarray(pair.raw_s1, dtype=np.float64)
    raw_t2 = np.asarray(pair.raw_t2, dtype=np.float64)
    raw_s2 = np.asarray(pair.raw_s2, dtype=np.float64)

    trace1, _, tape1 = _refine_tape(weights, raw_t1, raw_s1)
    trace2, _, tape2 = _refine_tape(weights, raw_t2, raw_s2)

    if len(gt_pairs) == 0:
        return ForwardBackwardResult(0.0, zero_grads(weights), True, trace1, trace2)
    if gt_pairs[:, 0].max() >= raw_t1.shape[0] or gt_pairs[:, 1].max() >= raw_t2.shape[0]:
        raise ContractError("ground-truth index out of range")
    if gt_pairs.min() < 0:
        raise ContractError("ground-truth indices must be non-negative")

    grads = zero_grads(weights)
    inv_t = float(np.exp(np.float64(weights.log_inv_temperature)))
    n_layers = cfg.n_layers
    total = 0.0
    d_inv_t = 0.0
    trace_grads1, trace_grads2 = [], []
    for layer in range(n_layers):
        t1, s1 = trace1.texture[layer], trace1.semantic[layer]
        t2, s2 = trace2.texture[layer], trace2.semantic[layer]
        c_t = t1 @ t2.T
        c_s = s1 @ s2.T
        c_f = c_t * c_s
        loss_l, ds = _dual_softmax_grad(c_f, gt_pairs, inv_t)
        total += loss_l
        ds /= n_layers
        d_inv_t += float((ds * c_f).sum())
        dc_f = ds * inv_t
        dc_t = dc_f * c_s
        dc_s = dc_f * c_t
        trace_grads1.append((dc_t @ t2, dc_s @ s2))
        trace_grads2.append((dc_t.T @ t1, dc_s.T @ s1))
    loss = total / n_layers

    _refine_bwd(weights, tape1, trace_grads1, grads)
    _refine_bwd(weights, tape2, trace_grads2, grads)
    grads["log_inv_temperature"] += d_inv_t * inv_t
    return ForwardBackwardResult(loss, grads, False, trace1, trace2)


def pair_loss(pair: PairInputs, weights: ReasoningWeights, gt_pairs: np.ndarray) -> float:
    """Loss-only evaluation (used by the finite-difference gradient check)."""
    cfg = weights.config
    gt_pairs = np.asarray(gt_pairs, dtype=np.int64).reshape(-1, 2)
    if len(gt_pairs) == 0:
        return 0.0
    trace1, _, _ = _refine_tape(weights, np.asarray(pair.raw_t1, np.float64), np.asarray(pair.raw_s1, np.float64))
    trace2, _, _ = _refine_tape(weights, np.asarray(pair.raw_t2, np.float64), np.asarray(pair.raw_s2, np.float64))
    inv_t = float(np.exp(np.float64(weights.log_inv_temperature)))
    total = 0.0
    for layer in range(cfg.n_layers):
        c_f = (trace1.texture[layer] @ trace2.texture[layer].T) * (
            trace1.semantic[layer] @ trace2.semantic[layer].T
        )
        loss_l, _ = _dual_softmax_grad(c_f, gt_pairs, inv_t)
        total += loss_l
    return total / cfg.n_layers
