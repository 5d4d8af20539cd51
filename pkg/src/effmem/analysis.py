"""Approximation error reports and an analytic operation-count model."""

from __future__ import annotations

import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np

from .errors import LocalityError, PoolingSpecError, SegmentationError
from .kernels import AttentionVariant, PoolingSpec, ProjectedBank, Variant, attend
from .synthetic import measure_locality
from .tensor import relative_frobenius_error, row_relative_errors

DEFAULT_REPEATS = 5
DEFAULT_WARMUP = 2


@dataclass(frozen=True)
class ApproxReport:
    variant: str
    L: int
    n: int
    P: int
    d: int
    l_w: int
    l_h: int
    rel_frobenius: float
    max_row_rel: float
    locality_c: float
    wall_ns_exact: int
    wall_ns_variant: int

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def speedup(self) -> float:
        return self.wall_ns_exact / self.wall_ns_variant if self.wall_ns_variant > 0 else float("nan")


def time_call(fn, repeats: int = DEFAULT_REPEATS, warmup: int = DEFAULT_WARMUP):
    """Median wall time of ``fn()`` in ns, plus the last result."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    result = None
    for _ in range(warmup):
        result = fn()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        result = fn()
        samples.append(time.perf_counter_ns() - t0)
    return max(1, int(statistics.median(samples))), result


def bank_locality(bank: ProjectedBank) -> float:
    """Worst raster locality over the key grids of all frames (NaN for 1-token grids)."""
    try:
        return max(measure_locality(g) for g in bank.k_spatial)
    except LocalityError:
        return float("nan")


def compare_variants(
    q,
    bank: ProjectedBank,
    variants,
    repeats: int = DEFAULT_REPEATS,
    warmup: int = DEFAULT_WARMUP,
) -> list[ApproxReport]:
    """Compare each variant against exact cross-attention on one instance.

    The exact kernel runs (and is timed) once; reports come back in the order
    of ``variants``.
    """
    exact_variant = AttentionVariant(Variant.EXACT)
    t_exact, exact = time_call(lambda: attend(q, bank, exact_variant), repeats, warmup)
    locality = bank_locality(bank)
    reports = []
    for variant in variants:
        t_var, approx = time_call(lambda v=variant: attend(q, bank, v), repeats, warmup)
        pooling = variant.pooling or PoolingSpec(1, 1)
        reports.append(
            ApproxReport(
                variant=str(variant),
                L=int(np.shape(q)[0]),
                n=bank.n,
                P=bank.P,
                d=bank.dim,
                l_w=pooling.l_w,
                l_h=pooling.l_h,
                rel_frobenius=relative_frobenius_error(approx, exact),
                max_row_rel=float(np.max(row_relative_errors(approx, exact), initial=0.0)),
                locality_c=locality,
                wall_ns_exact=t_exact,
                wall_ns_variant=t_var,
            )
        )
    return reports


# ---------------------------------------------------------------------------
# operation counts
#
# Conventions: multiplies and adds are separate operations, so a length-d dot
# product costs 2d. Softmax costs 3 per logit (subtract max, exp, divide).
# Pooling is charged n*d. For linear attention the "normalize" term holds the
# feature map (2 per entry of Q and K) and the final row division (L*d).


@dataclass(frozen=True)
class FlopBreakdown:
    attention: int
    normalize: int
    pooling: int

    @property
    def total(self) -> int:
        return self.attention + self.normalize + self.pooling


def _coarse_count(n: int, spec: PoolingSpec) -> int:
    if n % spec.area:
        raise PoolingSpecError(f"n={n} spatial tokens cannot be pooled by {spec.l_w}x{spec.l_h} windows")
    return n // spec.area


def flop_breakdown(variant: AttentionVariant, L: int, n: int, P: int, d: int) -> FlopBreakdown:
    tag = variant.tag
    m = n + P
    if tag is Variant.EXACT:
        return FlopBreakdown(4 * L * m * d, 3 * L * m, 0)
    if tag.pooled:
        mc = _coarse_count(n, variant.pooling) + P
        return FlopBreakdown(4 * L * mc * d, 3 * L * mc, n * d)
    if tag is Variant.LOCAL_WINDOWED:
        s = variant.segments
        if L % s or m % s:
            raise SegmentationError(f"cannot split L={L} queries and {m} keys into {s} segments")
        return FlopBreakdown(4 * L * m * d // s, 3 * L * m // s, 0)
    if tag is Variant.LINEAR:
        attention = 2 * m * d * d + 2 * L * d * d + 2 * m * d + 2 * L * d
        return FlopBreakdown(attention, 2 * (L + m) * d + L * d, 0)
    raise ValueError(f"unhandled variant {tag}")


def flop_count(variant: AttentionVariant, L: int, n: int, P: int, d: int) -> int:
    return flop_breakdown(variant, L, n, P, d).total


def attention_ratio(variant: AttentionVariant, L: int, n: int, P: int, d: int) -> float:
    """Exact attention-term count divided by the variant's."""
    exact = flop_breakdown(AttentionVariant(Variant.EXACT), L, n, P, d).attention
    return exact / flop_breakdown(variant, L, n, P, d).attention
