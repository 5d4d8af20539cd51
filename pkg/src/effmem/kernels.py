"""Cross-attention kernels over a spatial memory bank.

Spatial memory is stored as a stack of frame grids with shape
``(frames, w, h, d)``; token ``(p, q)`` of a frame sits at flat position
``p * h + q``. Object-pointer tokens are a separate ``(P, d)`` matrix that is
always appended after the spatial tokens and never pooled.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateQueryError, EmptyMemoryError, NumericError, PoolingSpecError, SegmentationError, ShapeError
from .tensor import as_tokens

LINEAR_EPS = 1e-6


@dataclass(frozen=True)
class PoolingSpec:
    l_w: int = 2
    l_h: int = 2

    def __post_init__(self):
        if int(self.l_w) != self.l_w or int(self.l_h) != self.l_h or self.l_w < 1 or self.l_h < 1:
            raise PoolingSpecError(f"window must be positive integers, got l_w={self.l_w}, l_h={self.l_h}")

    @property
    def area(self) -> int:
        return self.l_w * self.l_h

    @property
    def log_area(self) -> float:
        """The balancing constant ln(l_w * l_h)."""
        return math.log(self.area)

    def check(self, w: int, h: int) -> tuple[int, int]:
        """Return the coarse grid size, raising if the window does not tile ``w x h``."""
        if w % self.l_w or h % self.l_h:
            raise PoolingSpecError(
                f"pooling window does not tile grid: w={w}, h={h}, l_w={self.l_w}, l_h={self.l_h}"
            )
        return w // self.l_w, h // self.l_h

    def __str__(self):
        return f"{self.l_w}x{self.l_h}"


def _as_grid(grid, name="grid") -> np.ndarray:
    arr = np.ascontiguousarray(grid, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must have shape (w, h, d), got {arr.shape}")
    return arr


def _as_frames(frames, name) -> np.ndarray:
    arr = np.ascontiguousarray(frames, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ShapeError(f"{name} must have shape (frames, w, h, d), got {arr.shape}")
    return arr


def _as_pointers(pointers, d: int, name: str) -> np.ndarray:
    arr = np.asarray(pointers, dtype=np.float64)
    if arr.size == 0:
        return np.empty((0, d))
    arr = as_tokens(arr, name)
    if arr.shape[1] != d:
        raise ShapeError(f"{name} have dim {arr.shape[1]}, spatial tokens have dim {d}")
    return arr


@dataclass(frozen=True)
class MemoryBank:
    """Raw memory tokens: spatial frame grids plus object pointers, channel dim d_m."""

    spatial: np.ndarray  # (frames, w, h, d_m)
    pointers: np.ndarray  # (P, d_m)

    def __post_init__(self):
        spatial = _as_frames(self.spatial, "spatial")
        if spatial.shape[0] * spatial.shape[1] * spatial.shape[2] < 1:
            raise EmptyMemoryError("memory bank needs at least one spatial token")
        pointers = _as_pointers(self.pointers, spatial.shape[-1], "pointers")
        object.__setattr__(self, "spatial", spatial)
        object.__setattr__(self, "pointers", pointers)

    @classmethod
    def from_frames(cls, frames, pointers) -> "MemoryBank":
        frames = [_as_grid(f, "frame") for f in frames]
        if not frames:
            raise EmptyMemoryError("memory bank needs at least one frame")
        if len({f.shape for f in frames}) != 1:
            raise ShapeError(f"frame grids differ in shape: {[f.shape for f in frames]}")
        return cls(np.stack(frames), pointers)

    @property
    def frames(self) -> int:
        return self.spatial.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.spatial.shape[1], self.spatial.shape[2]

    @property
    def n(self) -> int:
        f, w, h, _ = self.spatial.shape
        return f * w * h

    @property
    def P(self) -> int:
        return self.pointers.shape[0]

    @property
    def dim(self) -> int:
        return self.spatial.shape[-1]

    def tokens(self) -> np.ndarray:
        """All memory tokens as one ``(n + P, d_m)`` matrix, spatial first."""
        return np.concatenate([self.spatial.reshape(-1, self.dim), self.pointers])


@dataclass(frozen=True)
class ProjectedBank:
    """Keys and values of a memory bank after projection to dimension d."""

    k_spatial: np.ndarray  # (frames, w, h, d)
    v_spatial: np.ndarray  # (frames, w, h, d)
    k_pointers: np.ndarray  # (P, d)
    v_pointers: np.ndarray  # (P, d)

    def __post_init__(self):
        ks = _as_frames(self.k_spatial, "k_spatial")
        vs = _as_frames(self.v_spatial, "v_spatial")
        if ks.shape != vs.shape:
            raise ShapeError(f"spatial keys {ks.shape} and values {vs.shape} differ")
        if ks.shape[0] * ks.shape[1] * ks.shape[2] < 1:
            raise EmptyMemoryError("memory bank needs at least one spatial token")
        d = ks.shape[-1]
        kp = _as_pointers(self.k_pointers, d, "k_pointers")
        vp = _as_pointers(self.v_pointers, d, "v_pointers")
        if kp.shape != vp.shape:
            raise ShapeError(f"pointer keys {kp.shape} and values {vp.shape} differ")
        for name, arr in (("k_spatial", ks), ("v_spatial", vs), ("k_pointers", kp), ("v_pointers", vp)):
            object.__setattr__(self, name, arr)

    @property
    def frames(self) -> int:
        return self.k_spatial.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.k_spatial.shape[1], self.k_spatial.shape[2]

    @property
    def n(self) -> int:
        f, w, h, _ = self.k_spatial.shape
        return f * w * h

    @property
    def P(self) -> int:
        return self.k_pointers.shape[0]

    @property
    def dim(self) -> int:
        return self.k_spatial.shape[-1]

    def keys(self) -> np.ndarray:
        return np.concatenate([self.k_spatial.reshape(-1, self.dim), self.k_pointers])

    def values(self) -> np.ndarray:
        return np.concatenate([self.v_spatial.reshape(-1, self.dim), self.v_pointers])


@dataclass(frozen=True)
class AttentionProjections:
    """Single-head linear maps: w_q is d_q x d, w_k and w_v are d_m x d."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    def __post_init__(self):
        w_q, w_k, w_v = (as_tokens(getattr(self, n), n) for n in ("w_q", "w_k", "w_v"))
        if not (w_q.shape[1] == w_k.shape[1] == w_v.shape[1]):
            raise ShapeError(f"projections disagree on d: w_q {w_q.shape}, w_k {w_k.shape}, w_v {w_v.shape}")
        if w_k.shape[0] != w_v.shape[0]:
            raise ShapeError(f"w_k {w_k.shape} and w_v {w_v.shape} must share d_m")
        object.__setattr__(self, "w_q", w_q)
        object.__setattr__(self, "w_k", w_k)
        object.__setattr__(self, "w_v", w_v)

    @property
    def d(self) -> int:
        return self.w_q.shape[1]

    @classmethod
    def identity(cls, d: int) -> "AttentionProjections":
        eye = np.eye(d)
        return cls(eye, eye.copy(), eye.copy())


class Variant(str, enum.Enum):
    EXACT = "Exact"
    EFFICIENT = "EfficientRebalanced"
    KEY_OFFSET = "KeyOffset"
    LINFORMER = "Linformer"
    LOCAL_WINDOWED = "LocalWindowed"
    LINEAR = "Linear"

    @property
    def pooled(self) -> bool:
        return self in (Variant.EFFICIENT, Variant.KEY_OFFSET, Variant.LINFORMER)


@dataclass(frozen=True)
class AttentionVariant:
    tag: Variant
    pooling: PoolingSpec | None = None
    segments: int = 4
    feature_map: str = "shifted_relu"

    def __post_init__(self):
        tag = Variant(self.tag)
        object.__setattr__(self, "tag", tag)
        if tag.pooled and self.pooling is None:
            raise PoolingSpecError(f"{tag.value} needs a pooling spec")
        if not tag.pooled and self.pooling is not None:
            raise PoolingSpecError(f"{tag.value} does not take a pooling spec")
        if self.segments < 1:
            raise SegmentationError(f"segments must be >= 1, got {self.segments}")
        if self.feature_map != "shifted_relu":
            raise ValueError(f"unknown feature map {self.feature_map!r}")

    @classmethod
    def make(cls, tag, pooling: PoolingSpec | None = None, segments: int = 4) -> "AttentionVariant":
        """Build a variant, dropping ``pooling`` for tags that do not use it."""
        tag = Variant(tag)
        return cls(tag, pooling if tag.pooled else None, segments)

    def __str__(self):
        if self.pooling is not None:
            return f"{self.tag.value}[{self.pooling}]"
        if self.tag is Variant.LOCAL_WINDOWED:
            return f"{self.tag.value}[{self.segments}]"
        return self.tag.value


# ---------------------------------------------------------------------------
# exact kernel


def _check_qkv(q, k, v):
    q = as_tokens(q, "q")
    k = as_tokens(k, "k")
    v = as_tokens(v, "v")
    if k.shape[0] != v.shape[0]:
        raise ShapeError(f"keys {k.shape} and values {v.shape} have different token counts")
    if not (q.shape[1] == k.shape[1] == v.shape[1]):
        raise ShapeError(f"dimension mismatch: q {q.shape}, k {k.shape}, v {v.shape}")
    if k.shape[0] == 0:
        raise EmptyMemoryError("cross-attention over an empty memory")
    return q, k, v


def cross_attention(q, k, v) -> np.ndarray:
    """softmax(Q K^T / sqrt(d)) V with d = q.shape[1]."""
    q, k, v = _check_qkv(q, k, v)
    return _attend(q, k, v)


def _attend(q, k, v, n_offset: int = 0, offset: float = 0.0) -> np.ndarray:
    """Shared softmax path; ``offset`` is added to the logits of the first ``n_offset`` keys."""
    logits = q @ k.T
    logits /= math.sqrt(q.shape[1])
    if n_offset and offset:
        logits[:, :n_offset] += offset
    if np.isnan(logits).any():
        raise NumericError("attention logits contain NaN")
    logits -= logits.max(axis=1, keepdims=True)
    np.exp(logits, out=logits)
    logits /= logits.sum(axis=1, keepdims=True)
    return logits @ v


# ---------------------------------------------------------------------------
# pooling


def pool_spatial_tokens(grid, spec: PoolingSpec) -> np.ndarray:
    """Average every ``l_w x l_h`` window of a ``(w, h, d)`` grid."""
    grid = _as_grid(grid)
    w, h, d = grid.shape
    wc, hc = spec.check(w, h)
    return grid.reshape(wc, spec.l_w, hc, spec.l_h, d).mean(axis=(1, 3))


def expand_surrogate(pooled, spec: PoolingSpec) -> np.ndarray:
    """Replicate each coarse token over its window, restoring the full grid size."""
    pooled = _as_grid(pooled, "pooled")
    return np.repeat(np.repeat(pooled, spec.l_w, axis=0), spec.l_h, axis=1)


def _pool_frames(frames: np.ndarray, spec: PoolingSpec) -> np.ndarray:
    """Pool every frame and flatten to ``(frames * w~ * h~, d)`` in frame order."""
    f, w, h, d = frames.shape
    wc, hc = spec.check(w, h)
    pooled = frames.reshape(f, wc, spec.l_w, hc, spec.l_h, d).mean(axis=(2, 4))
    return pooled.reshape(-1, d)


def _check_bank(q, bank: ProjectedBank, spec: PoolingSpec):
    q = as_tokens(q, "q")
    if q.shape[1] != bank.dim:
        raise ShapeError(f"query dim {q.shape[1]} != memory dim {bank.dim}")
    spec.check(*bank.grid_shape)
    return q


def pooled_bank(bank: ProjectedBank, spec: PoolingSpec) -> tuple[np.ndarray, np.ndarray]:
    """Coarse spatial keys and values, each ``(frames * w~ * h~, d)``."""
    return _pool_frames(bank.k_spatial, spec), _pool_frames(bank.v_spatial, spec)


def surrogate_bank(bank: ProjectedBank, spec: PoolingSpec) -> tuple[np.ndarray, np.ndarray]:
    """Full-size surrogate keys and values ``[K_bar_s; K_p]`` and ``[V_bar_s; V_p]``."""
    spec.check(*bank.grid_shape)
    ks = [expand_surrogate(pool_spatial_tokens(g, spec), spec) for g in bank.k_spatial]
    vs = [expand_surrogate(pool_spatial_tokens(g, spec), spec) for g in bank.v_spatial]
    d = bank.dim
    k = np.concatenate([np.stack(ks).reshape(-1, d), bank.k_pointers])
    v = np.concatenate([np.stack(vs).reshape(-1, d), bank.v_pointers])
    return k, v


def _pooled_attention(q, k_coarse, k_ptr, values, spatial_offset: float) -> np.ndarray:
    keys = np.concatenate([k_coarse, k_ptr])
    return _attend(q, keys, values, k_coarse.shape[0], spatial_offset)


def efficient_cross_attention(q, bank: ProjectedBank, spec: PoolingSpec) -> np.ndarray:
    """Attention over pooled spatial tokens with ln(l_w*l_h) added to their logits.

    Equal (up to rounding) to exact attention over the full-size surrogate
    bank produced by :func:`surrogate_bank`.
    """
    q = _check_bank(q, bank, spec)
    kc, vc = pooled_bank(bank, spec)
    values = np.concatenate([vc, bank.v_pointers])
    return _pooled_attention(q, kc, bank.k_pointers, values, spec.log_area)


def key_offset_cross_attention(q, bank: ProjectedBank, spec: PoolingSpec) -> np.ndarray:
    """Pooled attention with ln(l_w*l_h) added to every pooled key entry."""
    q = _check_bank(q, bank, spec)
    kc, vc = pooled_bank(bank, spec)
    values = np.concatenate([vc, bank.v_pointers])
    return _pooled_attention(q, kc + spec.log_area, bank.k_pointers, values, 0.0)


def linformer_cross_attention(q, bank: ProjectedBank, spec: PoolingSpec) -> np.ndarray:
    """Pooled attention without any balancing term."""
    q = _check_bank(q, bank, spec)
    kc, vc = pooled_bank(bank, spec)
    values = np.concatenate([vc, bank.v_pointers])
    return _pooled_attention(q, kc, bank.k_pointers, values, 0.0)


# ---------------------------------------------------------------------------
# ablation baselines


def local_windowed_cross_attention(q, k, v, segments: int = 4) -> np.ndarray:
    """Block-diagonal attention: query block i only sees key/value block i."""
    q, k, v = _check_qkv(q, k, v)
    if segments < 1 or q.shape[0] % segments or k.shape[0] % segments:
        raise SegmentationError(
            f"cannot split {q.shape[0]} queries and {k.shape[0]} keys into {segments} equal segments"
        )
    lq, lk = q.shape[0] // segments, k.shape[0] // segments
    out = [
        cross_attention(q[i * lq : (i + 1) * lq], k[i * lk : (i + 1) * lk], v[i * lk : (i + 1) * lk])
        for i in range(segments)
    ]
    return np.concatenate(out) if out else np.empty((0, v.shape[1]))


def feature_map(x) -> np.ndarray:
    return np.maximum(x, 0.0) + LINEAR_EPS


def linear_cross_attention(q, k, v) -> np.ndarray:
    """Kernelised attention: phi(Q) (phi(K)^T V) normalised row-wise."""
    q, k, v = _check_qkv(q, k, v)
    fq, fk = feature_map(q), feature_map(k)
    kv = fk.T @ v
    norm = fq @ fk.sum(axis=0)
    if not np.all(np.isfinite(norm)) or np.any(norm <= 0):
        raise DegenerateQueryError("linear attention normaliser is zero or non-finite")
    return (fq @ kv) / norm[:, None]


# ---------------------------------------------------------------------------
# projection and dispatch


def project(x, bank: MemoryBank, proj: AttentionProjections) -> tuple[np.ndarray, ProjectedBank]:
    """Map frame features to queries and memory tokens to keys/values."""
    x = as_tokens(x, "x")
    if x.shape[1] != proj.w_q.shape[0]:
        raise ShapeError(f"features have d_q={x.shape[1]} but w_q expects {proj.w_q.shape[0]}")
    if bank.dim != proj.w_k.shape[0]:
        raise ShapeError(f"memory has d_m={bank.dim} but w_k expects {proj.w_k.shape[0]}")
    q = x @ proj.w_q
    f, w, h, dm = bank.spatial.shape
    flat = bank.spatial.reshape(-1, dm)
    d = proj.d
    return q, ProjectedBank(
        (flat @ proj.w_k).reshape(f, w, h, d),
        (flat @ proj.w_v).reshape(f, w, h, d),
        bank.pointers @ proj.w_k,
        bank.pointers @ proj.w_v,
    )


def attend(q, bank: ProjectedBank, variant: AttentionVariant) -> np.ndarray:
    """Run the kernel selected by ``variant``."""
    tag = variant.tag
    if tag is Variant.EXACT:
        return cross_attention(q, bank.keys(), bank.values())
    if tag is Variant.EFFICIENT:
        return efficient_cross_attention(q, bank, variant.pooling)
    if tag is Variant.KEY_OFFSET:
        return key_offset_cross_attention(q, bank, variant.pooling)
    if tag is Variant.LINFORMER:
        return linformer_cross_attention(q, bank, variant.pooling)
    if tag is Variant.LOCAL_WINDOWED:
        return local_windowed_cross_attention(q, bank.keys(), bank.values(), variant.segments)
    if tag is Variant.LINEAR:
        return linear_cross_attention(q, bank.keys(), bank.values())
    raise ValueError(f"unhandled variant {tag}")
