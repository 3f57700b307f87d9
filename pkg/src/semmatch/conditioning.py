"""Correlation matrices, semantic conditioning, and mutual-nearest matching.

The matcher never looks at image pairs jointly during extraction: it takes
two independently refined feature sets, computes a texture correlation and
a semantic correlation, multiplies them element-wise so that low semantic
agreement suppresses texture-only false matches, and keeps mutual argmax
pairs. Ties resolve to the smallest index, which makes outputs deterministic.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError
from .features import RefinedFeatures

ROLES = ("texture", "semantic", "conditioned")


@dataclass
class CorrelationMatrix:
    values: np.ndarray  # (N1, N2)
    role: str = "texture"

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values))
        if self.role not in ROLES:
            raise ContractError(f"unknown correlation role {self.role!r}")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("correlation matrix contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class MatchSet:
    indices: np.ndarray  # (M, 2) int64, (i, j)
    scores: np.ndarray  # (M,) float64
    n1: int
    n2: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1, 2)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if len(self.indices) != len(self.scores):
            raise ContractError("indices and scores disagree in length")
        if len(self.indices) > 0:
            i, j = self.indices[:, 0], self.indices[:, 1]
            if i.min() < 0 or j.min() < 0 or i.max() >= self.n1 or j.max() >= self.n2:
                raise ContractError("match indices out of range")
            if len(np.unique(i)) != len(i) or len(np.unique(j)) != len(j):
                raise ContractError("matches must be one-to-one")

    def __len__(self) -> int:
        return len(self.indices)

    def as_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.indices}


def correlation(a: np.ndarray, b: np.ndarray, role: str = "texture") -> CorrelationMatrix:
    """Similarity matrix A @ B^T of two descriptor sets sharing dimension d."""
    a = np.atleast_2d(np.asarray(a))
    b = np.atleast_2d(np.asarray(b))
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"descriptor dims differ: {a.shape[1]} vs {b.shape[1]}")
    return CorrelationMatrix(a @ b.T, role)


def condition(c_t: CorrelationMatrix, c_s: CorrelationMatrix) -> CorrelationMatrix:
    """Element-wise product of texture and semantic correlations."""
    if c_t.shape != c_s.shape:
        raise ContractError(f"correlation shapes differ: {c_t.shape} vs {c_s.shape}")
    return CorrelationMatrix(c_t.values * c_s.values, "conditioned")


def mnn(c: CorrelationMatrix, min_score: float = 0.0) -> MatchSet:
    """Mutual-nearest-neighbor matches of a correlation matrix.

    (i, j) is kept iff j is the argmax of row i, i is the argmax of column j,
    and C[i, j] > min_score. np.argmax returns the first maximum, which
    implements the smallest-index tie-break.
    """
    values = c.values
    n1, n2 = values.shape
    if n1 == 0 or n2 == 0:
        return MatchSet(np.zeros((0, 2)), np.zeros(0), n1, n2)
    best_col = np.argmax(values, axis=1)  # per row
    best_row = np.argmax(values, axis=0)  # per column
    rows = np.arange(n1)
    mutual = best_row[best_col] == rows
    picked = values[rows, best_col]
    keep = mutual & (picked > min_score)
    return MatchSet(
        np.stack([rows[keep], best_col[keep]], axis=1),
        picked[keep],
        n1,
        n2,
    )


def match_pair(
    f1: RefinedFeatures,
    f2: RefinedFeatures,
    min_score: float = 0.0,
    texture_only: bool = False,
) -> MatchSet:
    """Match two refined feature sets with semantically conditioned MNN.

    texture_only bypasses the conditioning (used for A/B comparisons).
    """
    if f1.dim != f2.dim and len(f1) > 0 and len(f2) > 0:
        raise ContractError(f"descriptor dims differ: {f1.dim} vs {f2.dim}")
    if len(f1) == 0 or len(f2) == 0:
        return MatchSet(np.zeros((0, 2)), np.zeros(0), len(f1), len(f2))
    c_t = correlation(f1.d_t.astype(np.float64), f2.d_t.astype(np.float64), "texture")
    if texture_only:
        return mnn(c_t, min_score)
    c_s = correlation(f1.d_s.astype(np.float64), f2.d_s.astype(np.float64), "semantic")
    return mnn(condition(c_t, c_s), min_score)


def save_matches(path: str | Path, matches: MatchSet) -> None:
    """Write a match file: a "# N1 N2" header then one "i j score" line per match.

    Published atomically (temp file + rename) so parallel writers and readers
    never observe a partial file.
    """
    lines = [f"# {matches.n1} {matches.n2}"]
    for (i, j), s in zip(matches.indices, matches.scores):
        lines.append(f"{i} {j} {s:.9g}")
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent or Path("."), prefix=".tmp-", suffix=".txt")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except FileNotFoundError:
            pass
        raise


def load_matches(path: str | Path) -> MatchSet:
    """Parse a match file written by save_matches."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ParseError("match file must start with a '# N1 N2' header", path=str(path))
    try:
        n1, n2 = (int(tok) for tok in lines[0][1:].split())
    except ValueError as exc:
        raise ParseError(f"malformed match header {lines[0]!r}", path=str(path)) from exc
    indices, scores = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        toks = line.split()
        if len(toks) != 3:
            raise ParseError(f"malformed match line {lineno}: {line!r}", path=str(path))
        indices.append((int(toks[0]), int(toks[1])))
        scores.append(float(toks[2]))
    return MatchSet(np.asarray(indices, dtype=np.int64).reshape(-1, 2), np.asarray(scores), n1, n2)
