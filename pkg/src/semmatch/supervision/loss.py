"""Dual-softmax supervision losses, computed independently of the training engine.

This module re-derives the loss from correlation matrices with stable
log-softmax gathers; the training engine carries its own fused
implementation, and the two are required to agree to 1e-6, which guards
both against silent drift.
"""

from __future__ import annotations

import numpy as np

from ..conditioning import CorrelationMatrix
from ..errors import ContractError
from ..features import GroundTruthMatches
from ..reasoning import LayerTrace


def _as_values(c) -> np.ndarray:
    if isinstance(c, CorrelationMatrix):
        return np.asarray(c.values, dtype=np.float64)
    return np.atleast_2d(np.asarray(c, dtype=np.float64))


def _as_pairs(gt) -> np.ndarray:
    if isinstance(gt, GroundTruthMatches):
        return gt.pairs
    return np.asarray(gt, dtype=np.int64).reshape(-1, 2)


def dual_softmax_loss(c_f, gt, inv_temperature: float = 1.0) -> float:
    """Two-sided negative log-likelihood of the ground-truth assignment.

    Row direction uses a row-wise softmax of inv_temperature * C_f; the
    column direction uses the same on the transpose. Computed with
    max-subtracted logsumexp. An empty assignment scores 0.
    """
    values = _as_values(c_f)
    pairs = _as_pairs(gt)
    if len(pairs) == 0:
        return 0.0
    n1, n2 = values.shape
    rows, cols = pairs[:, 0], pairs[:, 1]
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= n1 or cols.max() >= n2:
        raise ContractError("ground-truth index out of range")

    s = inv_temperature * values
    row_max = s.max(axis=1)
    lse_rows = row_max + np.log(np.exp(s - row_max[:, None]).sum(axis=1))
    col_max = s.max(axis=0)
    lse_cols = col_max + np.log(np.exp(s - col_max[None, :]).sum(axis=0))
    picked = s[rows, cols]
    return float((lse_rows[rows] - picked).sum() + (lse_cols[cols] - picked).sum())


def deep_loss(trace1: LayerTrace, trace2: LayerTrace, gt, inv_temperature: float = 1.0) -> float:
    """Mean of the per-layer dual-softmax losses on conditioned correlations."""
    if len(trace1) != len(trace2):
        raise ContractError(f"trace lengths differ: {len(trace1)} vs {len(trace2)}")
    if len(trace1) == 0:
        raise ContractError("deep loss needs at least one layer")
    total = 0.0
    for t1, s1, t2, s2 in zip(trace1.texture, trace1.semantic, trace2.texture, trace2.semantic):
        c_f = (np.asarray(t1) @ np.asarray(t2).T) * (np.asarray(s1) @ np.asarray(s2).T)
        total += dual_softmax_loss(c_f, gt, inv_temperature)
    return total / len(trace1)
