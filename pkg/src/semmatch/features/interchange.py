"""Reader/writer for the "SCF1" interchange container.

Layout (all integers little-endian u32, all arrays little-endian f32,
row-major, packed back-to-back):

    magic   4 bytes  b"SCF1"
    version u32      1
    W, H    u32      source image size in pixels
    N       u32      keypoint count
    D_in    u32      texture descriptor width
    H', W'  u32      semantic grid size
    C       u32      semantic channels
    keypoints  N x 2 f32   (x, y)
    scores     N     f32
    texture    N x D_in f32
    semantic   H' x W' x C f32

The loader returns arrays exactly as stored and validates the header counts
against the payload length before touching any array.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import (
    BadMagicError,
    NonFiniteValueError,
    ParseError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from .types import DenseSemanticMap, KeypointSet, RawDescriptors

MAGIC = b"SCF1"
_HEADER = struct.Struct("<4s8I")  # magic, version, W, H, N, D_in, H', W', C


def save_interchange(
    path: str | Path,
    keypoints: KeypointSet,
    texture: RawDescriptors,
    semantic_map: DenseSemanticMap,
) -> None:
    """Write one image's features to an SCF1 file."""
    n = len(keypoints)
    grid = semantic_map.grid
    header = _HEADER.pack(
        MAGIC,
        1,
        keypoints.image_width,
        keypoints.image_height,
        n,
        texture.dim,
        grid.shape[0],
        grid.shape[1],
        grid.shape[2],
    )
    blob = b"".join(
        [
            header,
            keypoints.points.astype("<f4").tobytes(),
            keypoints.scores.astype("<f4").tobytes(),
            texture.matrix.astype("<f4").tobytes(),
            grid.astype("<f4").tobytes(),
        ]
    )
    Path(path).write_bytes(blob)


def load_interchange(path: str | Path) -> tuple[KeypointSet, RawDescriptors, DenseSemanticMap]:
    """Load an SCF1 file, validating magic, version, sizes, and finiteness."""
    path = Path(path)
    data = path.read_bytes()
    spath = str(path)
    if len(data) < _HEADER.size:
        raise TruncatedPayloadError(
            f"file is {len(data)} bytes, shorter than the {_HEADER.size}-byte header",
            offset=len(data),
            path=spath,
        )
    magic, version, w, h, n, d_in, gh, gw, c = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0, path=spath)
    if version != 1:
        raise UnsupportedVersionError(f"unsupported version {version}", offset=4, path=spath)

    sections = [
        ("keypoints", n * 2, (n, 2)),
        ("scores", n, (n,)),
        ("texture", n * d_in, (n, d_in)),
        ("semantic grid", gh * gw * c, (gh, gw, c)),
    ]
    expected = _HEADER.size + 4 * sum(count for _, count, _ in sections)
    if len(data) < expected:
        raise TruncatedPayloadError(
            f"payload ends early: header declares {expected} bytes, file has {len(data)}",
            offset=len(data),
            path=spath,
        )
    if len(data) > expected:
        raise ParseError(
            f"{len(data) - expected} trailing bytes after the declared payload",
            offset=expected,
            path=spath,
        )

    offset = _HEADER.size
    arrays = {}
    for name, count, shape in sections:
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        bad = np.flatnonzero(~np.isfinite(arr))
        if bad.size:
            raise NonFiniteValueError(
                f"non-finite value in {name} array at element {bad[0]}",
                offset=offset + 4 * int(bad[0]),
                path=spath,
            )
        arrays[name] = arr.reshape(shape).copy()
        offset += 4 * count

    kps = KeypointSet(arrays["keypoints"], arrays["scores"], int(w), int(h))
    texture = RawDescriptors(arrays["texture"], "texture")
    semantic = DenseSemanticMap(arrays["semantic grid"], int(w), int(h))
    return kps, texture, semantic
