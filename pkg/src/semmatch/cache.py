"""Content-addressed on-disk store for refined features.

Keys are hex SHA-256 digests derived from the source interchange bytes, the
weights file digest, and a config fingerprint, so renaming inputs still hits
and retraining invalidates. Entries live at <root>/<key[:2]>/<key>.scc in the
"SCC1" format; writers publish atomically (temp file + rename), readers never
observe partial files, and absence is an ordinary result rather than an
error.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CacheCorruptionError
from .features import KeypointSet, RefinedFeatures

MAGIC = b"SCC1"
_HEADER = struct.Struct("<4s5I")  # magic, version, N, d, W, H


def compute_cache_key(source_bytes: bytes, weights_digest: str, config_fingerprint: str) -> str:
    """256-bit content key; any byte change in any ingredient changes it."""
    h = hashlib.sha256()
    h.update(hashlib.sha256(source_bytes).digest())
    h.update(bytes.fromhex(weights_digest))
    h.update(config_fingerprint.encode("utf-8"))
    return h.hexdigest()


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_fingerprint(**fields) -> str:
    """Canonical JSON of the config values that affect extraction output."""
    return json.dumps(fields, sort_keys=True, separators=(",", ":"))


def _encode(features: RefinedFeatures) -> bytes:
    kps = features.keypoints
    header = _HEADER.pack(
        MAGIC, 1, len(features), features.dim, kps.image_width, kps.image_height
    )
    return b"".join(
        [
            header,
            kps.points.astype("<f4").tobytes(),
            kps.scores.astype("<f4").tobytes(),
            features.d_t.astype("<f4").tobytes(),
            features.d_s.astype("<f4").tobytes(),
        ]
    )


def _decode(data: bytes, key: str) -> RefinedFeatures:
    if len(data) < _HEADER.size:
        raise CacheCorruptionError(key, f"only {len(data)} bytes, header needs {_HEADER.size}")
    magic, version, n, d, w, h = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CacheCorruptionError(key, f"bad magic {magic!r}")
    if version != 1:
        raise CacheCorruptionError(key, f"unsupported version {version}")
    expected = _HEADER.size + 4 * (n * 2 + n + 2 * n * d)
    if len(data) != expected:
        raise CacheCorruptionError(key, f"payload is {len(data)} bytes, expected {expected}")
    offset = _HEADER.size

    def take(count: int, shape) -> np.ndarray:
        nonlocal offset
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
        offset += 4 * count
        return arr

    points = take(n * 2, (n, 2))
    scores = take(n, (n,))
    d_t = take(n * d, (n, d))
    d_s = take(n * d, (n, d))
    return RefinedFeatures(KeypointSet(points, scores, int(w), int(h)), d_t, d_s)


class FeatureCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.scc"

    def put(self, key: str, features: RefinedFeatures) -> Path:
        """Atomically publish an entry; concurrent writers race benignly."""
        target = self.path_for(key)
        target.parent.mkdir(parents=True, exist_ok=True)
        payload = _encode(features)
        fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=".tmp-", suffix=".scc")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp_name, target)
        except BaseException:
            try:
                os.unlink(tmp_name)
            except FileNotFoundError:
                pass
            raise
        return target

    def get(self, key: str) -> RefinedFeatures | None:
        """Stored features, or None when the key is absent."""
        target = self.path_for(key)
        try:
            data = target.read_bytes()
        except FileNotFoundError:
            return None
        return _decode(data, key)

    def __contains__(self, key: str) -> bool:
        return self.path_for(key).exists()
