"""Learnable state of the descriptor-refinement stack and its disk format.

Parameters live in float32 (the storage dtype); all math promotes to
float64. Attention output projections and the last MLP affine start at
zero, so a freshly initialized stack is the identity map on top of the
input projections and can be trained without destabilizing the descriptors
it refines.

Weight files use the "SCW1" container: magic, version, a fixed config
block, then a table of named little-endian float32 tensors. Round trips
are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from ..errors import (
    BadMagicError,
    ContractError,
    MissingTensorError,
    ParseError,
    TensorShapeError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)

MAGIC = b"SCW1"
INITIAL_INV_TEMPERATURE = 20.0


@dataclass(frozen=True)
class ReasoningConfig:
    dim: int = 256
    n_layers: int = 5
    heads: int = 4
    texture_dim: int = 64
    semantic_dim: int = 384

    def __post_init__(self):
        if self.dim <= 0 or self.heads <= 0 or min(self.texture_dim, self.semantic_dim) <= 0:
            raise ContractError("all dimensions must be positive")
        if self.n_layers < 0:
            raise ContractError("n_layers must be >= 0")
        if self.dim % self.heads != 0:
            raise ContractError(f"dim {self.dim} not divisible by {self.heads} heads")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


@dataclass
class AffineParams:
    weight: np.ndarray  # (in, out)
    bias: np.ndarray  # (out,)


@dataclass
class LayerNormParams:
    gain: np.ndarray  # (dim,)
    bias: np.ndarray  # (dim,)


@dataclass
class AttentionLayerParams:
    """One cross-attention block: qkv/out projections plus the update MLP."""

    query: AffineParams  # d -> d
    key: AffineParams  # d -> d
    value: AffineParams  # d -> d
    out: AffineParams  # d -> d, zero-initialized
    mlp_hidden: AffineParams  # 2d -> 2d
    mlp_norm: LayerNormParams  # 2d
    mlp_out: AffineParams  # 2d -> d, zero-initialized


@dataclass
class ReasoningWeights:
    config: ReasoningConfig
    texture_proj: AffineParams  # texture_dim -> d
    semantic_proj: AffineParams  # semantic_dim -> d
    texture_layers: list[AttentionLayerParams] = field(repr=False)
    semantic_layers: list[AttentionLayerParams] = field(repr=False)
    log_inv_temperature: np.ndarray = field(default=None)  # scalar, shape ()

    def __post_init__(self):
        if len(self.texture_layers) != self.config.n_layers or len(self.semantic_layers) != self.config.n_layers:
            raise ContractError("layer count disagrees with config")

    def named_tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        """All parameters as (name, array), in a canonical stable order."""
        yield "texture_proj.weight", self.texture_proj.weight
        yield "texture_proj.bias", self.texture_proj.bias
        yield "semantic_proj.weight", self.semantic_proj.weight
        yield "semantic_proj.bias", self.semantic_proj.bias
        for branch, layers in (("texture_layers", self.texture_layers), ("semantic_layers", self.semantic_layers)):
            for i, layer in enumerate(layers):
                for part in ("query", "key", "value", "out", "mlp_hidden", "mlp_out"):
                    affine = getattr(layer, part)
                    yield f"{branch}.{i}.{part}.weight", affine.weight
                    yield f"{branch}.{i}.{part}.bias", affine.bias
                yield f"{branch}.{i}.mlp_norm.gain", layer.mlp_norm.gain
                yield f"{branch}.{i}.mlp_norm.bias", layer.mlp_norm.bias
        yield "log_inv_temperature", self.log_inv_temperature

    def astype(self, dtype) -> "ReasoningWeights":
        """Copy with every tensor cast to dtype (float64 for math, float32 for disk)."""
        tensors = {name: np.asarray(arr, dtype=dtype).copy() for name, arr in self.named_tensors()}
        return weights_from_tensors(self.config, tensors)


def expected_shapes(config: ReasoningConfig) -> dict[str, tuple[int, ...]]:
    d = config.dim
    shapes: dict[str, tuple[int, ...]] = {
        "texture_proj.weight": (config.texture_dim, d),
        "texture_proj.bias": (d,),
        "semantic_proj.weight": (config.semantic_dim, d),
        "semantic_proj.bias": (d,),
        "log_inv_temperature": (),
    }
    per_part = {
        "query": ((d, d), (d,)),
        "key": ((d, d), (d,)),
        "value": ((d, d), (d,)),
        "out": ((d, d), (d,)),
        "mlp_hidden": ((2 * d, 2 * d), (2 * d,)),
        "mlp_out": ((2 * d, d), (d,)),
    }
    for branch in ("texture_layers", "semantic_layers"):
        for i in range(config.n_layers):
            for part, (w_shape, b_shape) in per_part.items():
                shapes[f"{branch}.{i}.{part}.weight"] = w_shape
                shapes[f"{branch}.{i}.{part}.bias"] = b_shape
            shapes[f"{branch}.{i}.mlp_norm.gain"] = (2 * d,)
            shapes[f"{branch}.{i}.mlp_norm.bias"] = (2 * d,)
    return shapes


def weights_from_tensors(config: ReasoningConfig, tensors: dict[str, np.ndarray]) -> ReasoningWeights:
    """Assemble a ReasoningWeights from a name -> array table (shared, not copied)."""

    def affine(prefix: str) -> AffineParams:
        return AffineParams(tensors[f"{prefix}.weight"], tensors[f"{prefix}.bias"])

    def layer(prefix: str) -> AttentionLayerParams:
        return AttentionLayerParams(
            query=affine(f"{prefix}.query"),
            key=affine(f"{prefix}.key"),
            value=affine(f"{prefix}.value"),
            out=affine(f"{prefix}.out"),
            mlp_hidden=affine(f"{prefix}.mlp_hidden"),
            mlp_norm=LayerNormParams(tensors[f"{prefix}.mlp_norm.gain"], tensors[f"{prefix}.mlp_norm.bias"]),
            mlp_out=affine(f"{prefix}.mlp_out"),
        )

    return ReasoningWeights(
        config=config,
        texture_proj=affine("texture_proj"),
        semantic_proj=affine("semantic_proj"),
        texture_layers=[layer(f"texture_layers.{i}") for i in range(config.n_layers)],
        semantic_layers=[layer(f"semantic_layers.{i}") for i in range(config.n_layers)],
        log_inv_temperature=tensors["log_inv_temperature"],
    )


def init_weights(config: ReasoningConfig, seed: int) -> ReasoningWeights:
    """Deterministic initialization: fan-in uniform projections, zero residual outputs."""
    rng = np.random.default_rng(seed)

    def fan_in_uniform(shape: tuple[int, ...]) -> np.ndarray:
        bound = 1.0 / np.sqrt(shape[0])
        return rng.uniform(-bound, bound, size=shape).astype(np.float32)

    tensors: dict[str, np.ndarray] = {}
    for name, shape in expected_shapes(config).items():
        if name == "log_inv_temperature":
            tensors[name] = np.array(np.log(INITIAL_INV_TEMPERATURE), dtype=np.float32)
        elif name.endswith("mlp_norm.gain"):
            tensors[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith((".out.weight", ".out.bias", ".mlp_out.weight", ".mlp_out.bias")):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        elif name.endswith(".bias") or name.endswith("mlp_norm.bias"):
            tensors[name] = np.zeros(shape, dtype=np.float32)
        else:
            tensors[name] = fan_in_uniform(shape)
    return weights_from_tensors(config, tensors)


_CONFIG_STRUCT = struct.Struct("<5I")


def save_weights(weights: ReasoningWeights, path: str | Path) -> None:
    """Serialize to the SCW1 container (float32 storage)."""
    cfg = weights.config
    chunks = [
        MAGIC,
        struct.pack("<I", 1),
        _CONFIG_STRUCT.pack(cfg.dim, cfg.n_layers, cfg.heads, cfg.texture_dim, cfg.semantic_dim),
    ]
    entries = list(weights.named_tensors())
    chunks.append(struct.pack("<I", len(entries)))
    for name, arr in entries:
        encoded = name.encode("utf-8")
        arr32 = np.asarray(arr, dtype="<f4")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr32.ndim))
        chunks.append(struct.pack(f"<{arr32.ndim}I", *arr32.shape))
        chunks.append(arr32.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_weights(path: str | Path) -> ReasoningWeights:
    """Load an SCW1 file, verifying names and shapes against its config."""
    path = Path(path)
    data = path.read_bytes()
    spath = str(path)
    view = memoryview(data)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedPayloadError(f"file ends inside {what}", offset=len(data), path=spath)
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    magic = bytes(take(4, "magic"))
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0, path=spath)
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != 1:
        raise UnsupportedVersionError(f"unsupported version {version}", offset=4, path=spath)
    dim, n_layers, heads, tex_dim, sem_dim = _CONFIG_STRUCT.unpack(take(_CONFIG_STRUCT.size, "config"))
    config = ReasoningConfig(dim, n_layers, heads, tex_dim, sem_dim)

    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4, "tensor name length"))
        name = bytes(take(name_len, "tensor name")).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4, f"{name} ndim"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"{name} shape"))
        n_values = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = take(4 * n_values, f"{name} data")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if pos != len(data):
        raise ParseError(f"{len(data) - pos} trailing bytes", offset=pos, path=spath)

    shapes = expected_shapes(config)
    for name, shape in shapes.items():
        if name not in tensors:
            raise MissingTensorError(f"weights file lacks tensor {name!r}", path=spath)
        if tensors[name].shape != shape:
            raise TensorShapeError(
                f"tensor {name!r} has shape {tensors[name].shape}, config requires {shape}",
                path=spath,
            )
    unknown = set(tensors) - set(shapes)
    if unknown:
        raise ParseError(f"unexpected tensors {sorted(unknown)}", path=spath)
    return weights_from_tensors(config, tensors)
