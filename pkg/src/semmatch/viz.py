"""Static SVG renderings of match sets and per-query similarity heat maps.

Layout is two side-by-side panels sized like the source images. Match lines
are the only <line> elements in the document: green for matches confirmed by
ground truth, red for contradicted ones, gray when no ground truth is given.
Heat-map mode highlights the top-K most correlated keypoints of the paired
image for one query keypoint, hotter color meaning higher similarity.
"""

from __future__ import annotations

import numpy as np

from .conditioning import MatchSet
from .errors import ContractError
from .features import GroundTruthMatches, KeypointSet, RefinedFeatures

_MARGIN = 24.0
DEFAULT_TOP_K = 128


def _heat_color(fraction: float) -> str:
    """Cold blue (0) to hot red (1)."""
    f = min(max(fraction, 0.0), 1.0)
    r = int(round(40 + 215 * f))
    g = int(round(60 + 40 * (1 - abs(2 * f - 1))))
    b = int(round(255 - 215 * f))
    return f"#{r:02x}{g:02x}{b:02x}"


def _panel_header(kps1: KeypointSet, kps2: KeypointSet) -> tuple[list[str], float, float, float]:
    w1, h1 = kps1.image_width, kps1.image_height
    w2, h2 = kps2.image_width, kps2.image_height
    offset = w1 + _MARGIN
    width = offset + w2
    height = max(h1, h2)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        '<rect class="panel" x="0" y="0" width='
        f'"{w1}" height="{h1}" fill="#181818" stroke="#555"/>',
        f'<rect class="panel" x="{offset:.1f}" y="0" width="{w2}" height="{h2}" '
        'fill="#181818" stroke="#555"/>',
    ]
    return parts, offset, float(width), float(height)


def _keypoint_circles(kps: KeypointSet, x_offset: float, skip: set[int] | None = None) -> list[str]:
    out = []
    skip = skip or set()
    for idx, (x, y) in enumerate(kps.points):
        if idx in skip:
            continue
        out.append(
            f'<circle class="kp" cx="{x + x_offset:.2f}" cy="{y:.2f}" r="1.6" fill="#9a9a9a"/>'
        )
    return out


def render_matches_svg(
    kps1: KeypointSet,
    kps2: KeypointSet,
    matches: MatchSet,
    gt: GroundTruthMatches | None = None,
) -> str:
    """Side-by-side keypoints with one <line> per match, colored by correctness."""
    parts, offset, _, _ = _panel_header(kps1, kps2)
    parts += _keypoint_circles(kps1, 0.0)
    parts += _keypoint_circles(kps2, offset)
    gt_set = None if gt is None else {(int(i), int(j)) for i, j in gt.pairs}
    for (i, j), score in zip(matches.indices, matches.scores):
        x1, y1 = kps1.points[int(i)]
        x2, y2 = kps2.points[int(j)]
        if gt_set is None:
            cls, color = "match unknown", "#8a8a8a"
        elif (int(i), int(j)) in gt_set:
            cls, color = "match correct", "#2faf4f"
        else:
            cls, color = "match wrong", "#d03030"
        parts.append(
            f'<line class="{cls}" x1="{x1:.2f}" y1="{y1:.2f}" '
            f'x2="{x2 + offset:.2f}" y2="{y2:.2f}" stroke="{color}" stroke-width="0.8" '
            f'opacity="0.85"><title>{int(i)}-{int(j)} {score:.4f}</title></line>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def render_heatmap_svg(
    f1: RefinedFeatures,
    f2: RefinedFeatures,
    query_index: int,
    channel: str = "conditioned",
    top_k: int = DEFAULT_TOP_K,
) -> str:
    """Highlight the query's top-K correlated keypoints in the paired image.

    channel selects which similarity is ranked: texture, semantic, or their
    conditioned product.
    """
    n1, n2 = len(f1), len(f2)
    if not (0 <= query_index < n1):
        raise ContractError(f"query index {query_index} out of range for {n1} keypoints")
    if channel not in ("texture", "semantic", "conditioned"):
        raise ContractError(f"unknown similarity channel {channel!r}")

    q_t = f1.d_t[query_index].astype(np.float64)
    q_s = f1.d_s[query_index].astype(np.float64)
    sim_t = f2.d_t.astype(np.float64) @ q_t
    sim_s = f2.d_s.astype(np.float64) @ q_s
    row = {"texture": sim_t, "semantic": sim_s, "conditioned": sim_t * sim_s}[channel]

    k = min(top_k, n2)
    ranked = np.argsort(-row, kind="stable")[:k]
    lo, hi = (float(row[ranked].min()), float(row[ranked].max())) if k else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0

    parts, offset, _, _ = _panel_header(f1.keypoints, f2.keypoints)
    parts += _keypoint_circles(f1.keypoints, 0.0, skip={query_index})
    parts += _keypoint_circles(f2.keypoints, offset, skip=set(int(r) for r in ranked))
    qx, qy = f1.keypoints.points[query_index]
    parts.append(
        f'<circle class="query" cx="{qx:.2f}" cy="{qy:.2f}" r="4.0" '
        'fill="#ff2020" stroke="#ffffff" stroke-width="1.0"/>'
    )
    for r in ranked:
        x, y = f2.keypoints.points[int(r)]
        heat = ( float(row[r]) - lo) / span
        parts.append(
            f'<circle class="hot" cx="{x + offset:.2f}" cy="{y:.2f}" r="2.6" '
            f'fill="{_heat_color(heat)}"><title>{int(r)} {row[r]:.4f}</title></circle>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
