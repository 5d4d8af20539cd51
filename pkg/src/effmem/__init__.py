"""Pooled memory cross-attention: kernels, equivalence checks, error and cost analysis."""

from .analysis import ApproxReport, FlopBreakdown, compare_variants, flop_breakdown, flop_count
from .errors import (
    DegenerateQueryError,
    EffMemError,
    EmptyMemoryError,
    LocalityError,
    NumericError,
    PoolingSpecError,
    SegmentationError,
    ShapeError,
)
from .kernels import (
    AttentionProjections,
    AttentionVariant,
    MemoryBank,
    PoolingSpec,
    ProjectedBank,
    Variant,
    attend,
    cross_attention,
    efficient_cross_attention,
    expand_surrogate,
    key_offset_cross_attention,
    linear_cross_attention,
    linformer_cross_attention,
    local_windowed_cross_attention,
    pool_spatial_tokens,
    project,
)
from .memory import BlockParams, init_block_params, memory_attention_block, memory_attention_stack
from .synthetic import SmoothnessSpec, gen_random_grid, gen_smooth_grid, measure_locality
from .tensor import matmul, relative_frobenius_error, row_softmax

__version__ = "0.1.0"
