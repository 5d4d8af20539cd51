"""Memory-attention transformer blocks (forward only).

Each block is pre-norm::

    x1 = x  + SelfAttn(Norm1(x))
    x2 = x1 + CrossAttn(Norm2(x1), memory)
    y  = x2 + MLP(Norm3(x2))

Cross-attention can be any :class:`~effmem.kernels.AttentionVariant`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ShapeError
from .kernels import AttentionProjections, AttentionVariant, MemoryBank, attend, cross_attention, project
from .tensor import as_tokens

NORM_EPS = 1e-5
INIT_SCALE = 0.05


@dataclass(frozen=True)
class LayerNormParams:
    scale: np.ndarray
    bias: np.ndarray

    @classmethod
    def default(cls, dim: int) -> "LayerNormParams":
        return cls(np.ones(dim), np.zeros(dim))


@dataclass(frozen=True)
class BlockParams:
    """Weights of one block.

    ``self_proj`` maps d_q -> d for queries, keys and values alike;
    ``cross_proj`` maps d_q -> d for queries and d_m -> d for memory.
    ``self_out``/``cross_out`` (d x d_q) bring attention outputs back to the
    residual width, and the MLP is d_q -> d_ff -> d_q with a ReLU.
    """

    self_proj: AttentionProjections
    self_out: np.ndarray
    cross_proj: AttentionProjections
    cross_out: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray
    norm1: LayerNormParams
    norm2: LayerNormParams
    norm3: LayerNormParams

    def __post_init__(self):
        d_q = self.self_proj.w_q.shape[0]
        d = self.cross_proj.d
        if self.self_proj.w_k.shape[0] != d_q:
            raise ShapeError("self-attention keys/values must be projected from the frame features")
        if self.cross_proj.w_q.shape[0] != d_q:
            raise ShapeError(f"cross-attention w_q expects {self.cross_proj.w_q.shape[0]} inputs, block width is {d_q}")
        if self.self_out.shape != (self.self_proj.d, d_q) or self.cross_out.shape != (d, d_q):
            raise ShapeError("attention output projections must map d back to d_q")
        d_ff = self.mlp_w1.shape[1]
        if self.mlp_w1.shape != (d_q, d_ff) or self.mlp_w2.shape != (d_ff, d_q):
            raise ShapeError(f"MLP weights {self.mlp_w1.shape}, {self.mlp_w2.shape} do not fit width {d_q}")
        if self.mlp_b1.shape != (d_ff,) or self.mlp_b2.shape != (d_q,):
            raise ShapeError("MLP bias shapes do not match the weights")
        if d_ff < d:
            raise ShapeError(f"d_ff={d_ff} must be >= d={d}")
        for norm in (self.norm1, self.norm2, self.norm3):
            if norm.scale.shape != (d_q,) or norm.bias.shape != (d_q,):
                raise ShapeError("normalization parameters must have one entry per channel")
            if not (np.all(np.isfinite(norm.scale)) and np.all(np.isfinite(norm.bias))):
                raise ValueError("normalization parameters must be finite")

    @property
    def width(self) -> int:
        return self.self_proj.w_q.shape[0]

    @property
    def memory_dim(self) -> int:
        return self.cross_proj.w_k.shape[0]


def init_block_params(d_q: int, d_m: int, d: int, d_ff: int, seed: int) -> BlockParams:
    """Deterministic uniform [-0.05, 0.05] weights, unit norm scales, zero norm biases."""
    rng = np.random.default_rng(seed)

    def u(*shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

    return BlockParams(
        self_proj=AttentionProjections(u(d_q, d), u(d_q, d), u(d_q, d)),
        self_out=u(d, d_q),
        cross_proj=AttentionProjections(u(d_q, d), u(d_m, d), u(d_m, d)),
        cross_out=u(d, d_q),
        mlp_w1=u(d_q, d_ff),
        mlp_b1=u(d_ff),
        mlp_w2=u(d_ff, d_q),
        mlp_b2=u(d_q),
        norm1=LayerNormParams.default(d_q),
        norm2=LayerNormParams.default(d_q),
        norm3=LayerNormParams.default(d_q),
    )


def layer_norm(x: np.ndarray, p: LayerNormParams) -> np.ndarray:
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + NORM_EPS) * p.scale + p.bias


def self_attention(x: np.ndarray, proj: AttentionProjections) -> np.ndarray:
    return cross_attention(x @ proj.w_q, x @ proj.w_k, x @ proj.w_v)


def mlp(x: np.ndarray, params: BlockParams) -> np.ndarray:
    hidden = np.maximum(x @ params.mlp_w1 + params.mlp_b1, 0.0)
    return hidden @ params.mlp_w2 + params.mlp_b2


def memory_attention_block(x, bank: MemoryBank, params: BlockParams, variant: AttentionVariant) -> np.ndarray:
    """One pre-norm block: self-attention, memory cross-attention, MLP."""
    x = as_tokens(x, "x")
    if x.shape[0] < 1:
        raise ShapeError("frame features need at least one token")
    if x.shape[1] != params.width:
        raise ShapeError(f"features have width {x.shape[1]}, block expects {params.width}")
    if bank.dim != params.memory_dim:
        raise ShapeError(f"memory has d_m={bank.dim}, block expects {params.memory_dim}")

    x1 = x + self_attention(layer_norm(x, params.norm1), params.self_proj) @ params.self_out
    q, pbank = project(layer_norm(x1, params.norm2), bank, params.cross_proj)
    x2 = x1 + attend(q, pbank, variant) @ params.cross_out
    return x2 + mlp(layer_norm(x2, params.norm3), params)


def memory_attention_stack(x, bank: MemoryBank, blocks, variant: AttentionVariant) -> np.ndarray:
    """Apply blocks in order. An empty block list returns ``x`` unchanged."""
    out = as_tokens(x, "x")
    for params in blocks:
        out = memory_attention_block(out, bank, params, variant)
    return out


# ---------------------------------------------------------------------------
# parameter files: one .npz archive, arrays keyed "<block>.<field>[.<sub>]"


def _flatten(params: BlockParams) -> dict[str, np.ndarray]:
    out = {}
    for f in fields(params):
        value = getattr(params, f.name)
        if isinstance(value, AttentionProjections):
            for sub in ("w_q", "w_k", "w_v"):
                out[f"{f.name}.{sub}"] = getattr(value, sub)
        elif isinstance(value, LayerNormParams):
            out[f"{f.name}.scale"] = value.scale
            out[f"{f.name}.bias"] = value.bias
        else:
            out[f.name] = value
    return out


def save_params(path, blocks) -> None:
    arrays = {"num_blocks": np.array(len(blocks))}
    for i, params in enumerate(blocks):
        for key, value in _flatten(params).items():
            arrays[f"{i}.{key}"] = np.asarray(value, dtype=np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_params(path) -> list[BlockParams]:
    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files}
    blocks = []
    for i in range(int(arrays.pop("num_blocks"))):
        g = lambda key: arrays[f"{i}.{key}"]  # noqa: E731
        kwargs = {}
        for f in fields(BlockParams):
            if f.name.endswith("_proj"):
                kwargs[f.name] = AttentionProjections(g(f"{f.name}.w_q"), g(f"{f.name}.w_k"), g(f"{f.name}.w_v"))
            elif f.name.startswith("norm"):
                kwargs[f.name] = LayerNormParams(g(f"{f.name}.scale"), g(f"{f.name}.bias"))
            else:
                kwargs[f.name] = g(f.name)
        blocks.append(BlockParams(**kwargs))
    return blocks


__all__ = [
    "BlockParams",
    "LayerNormParams",
    "init_block_params",
    "layer_norm",
    "load_params",
    "memory_attention_block",
    "memory_attention_stack",
    "save_params",
]
