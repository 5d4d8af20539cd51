"""Equivalence checks between the pooled kernels and exact attention.

Each ``*_error`` function measures one identity on one instance; ``run_suite``
sweeps them over seeded instances and aggregates the worst case per check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import (
    AttentionVariant,
    PoolingSpec,
    ProjectedBank,
    Variant,
    attend,
    cross_attention,
    efficient_cross_attention,
    linformer_cross_attention,
    pool_spatial_tokens,
    expand_surrogate,
    pooled_bank,
    surrogate_bank,
)
from .memory import init_block_params, memory_attention_stack
from .synthetic import gen_memory_bank, gen_projected_bank, gen_queries
from .tensor import relative_frobenius_error

IDENTITY_TOL = 1e-10
EXACT_TOL = 1e-12
STACK_TOL = 1e-9


def max_abs_diff(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0))


def pooled_identity_error(q, bank: ProjectedBank, spec: PoolingSpec) -> float:
    """Relative error between the compact pooled form and exact attention on the surrogate bank."""
    k_bar, v_bar = surrogate_bank(bank, spec)
    return relative_frobenius_error(efficient_cross_attention(q, bank, spec), cross_attention(q, k_bar, v_bar))


def degenerate_pooling_error(q, bank: ProjectedBank) -> float:
    """Worst max-abs gap between any pooled variant with a 1x1 window and exact attention."""
    exact = cross_attention(q, bank.keys(), bank.values())
    one = PoolingSpec(1, 1)
    return max(
        max_abs_diff(attend(q, bank, AttentionVariant(tag, one)), exact)
        for tag in (Variant.EFFICIENT, Variant.KEY_OFFSET, Variant.LINFORMER)
    )


def window_constant(bank: ProjectedBank, spec: PoolingSpec) -> ProjectedBank:
    """Copy of ``bank`` whose spatial tokens are constant inside every pooling window."""

    def flatten(frames):
        return np.stack([expand_surrogate(pool_spatial_tokens(g, spec), spec) for g in frames])

    return ProjectedBank(flatten(bank.k_spatial), flatten(bank.v_spatial), bank.k_pointers, bank.v_pointers)


def window_constant_error(q, bank: ProjectedBank, spec: PoolingSpec) -> float:
    const = window_constant(bank, spec)
    exact = cross_attention(q, const.keys(), const.values())
    return max_abs_diff(efficient_cross_attention(q, const, spec), exact)


def without_pointers(bank: ProjectedBank) -> ProjectedBank:
    d = bank.dim
    return ProjectedBank(bank.k_spatial, bank.v_spatial, np.empty((0, d)), np.empty((0, d)))


def shift_equivalence_error(q, bank: ProjectedBank, spec: PoolingSpec) -> float:
    """With no pointer tokens the balancing term is a uniform logit shift."""
    bare = without_pointers(bank)
    return max_abs_diff(efficient_cross_attention(q, bare, spec), linformer_cross_attention(q, bare, spec))


def convexity_violation(q, bank: ProjectedBank, variant: AttentionVariant) -> float:
    """How far any output coordinate leaves the [min, max] box of the values it attends over."""
    out = attend(q, bank, variant)
    if variant.pooling is not None:
        _, vc = pooled_bank(bank, variant.pooling)
        boxes = [(np.concatenate([vc, bank.v_pointers]), slice(None))]
    elif variant.tag is Variant.LOCAL_WINDOWED:
        v = bank.values()
        s = variant.segments
        lq, lk = out.shape[0] // s, v.shape[0] // s
        boxes = [(v[i * lk : (i + 1) * lk], slice(i * lq, (i + 1) * lq)) for i in range(s)]
    else:
        boxes = [(bank.values(), slice(None))]
    worst = 0.0
    for values, rows in boxes:
        lo, hi = values.min(axis=0), values.max(axis=0)
        block = out[rows]
        worst = max(worst, float(np.max(lo - block, initial=0.0)), float(np.max(block - hi, initial=0.0)))
    return worst


def stack_consistency_error(x, bank, blocks) -> float:
    """Relative gap between Exact and 1x1 EfficientRebalanced stacks."""
    exact = memory_attention_stack(x, bank, blocks, AttentionVariant(Variant.EXACT))
    eff = memory_attention_stack(x, bank, blocks, AttentionVariant(Variant.EFFICIENT, PoolingSpec(1, 1)))
    return relative_frobenius_error(eff, exact)


# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    tolerance: float
    worst: float = 0.0
    cases: int = 0

    @property
    def passed(self) -> bool:
        return self.cases > 0 and self.worst <= self.tolerance

    def update(self, value: float) -> None:
        self.cases += 1
        if not value <= self.worst:  # NaN propagates as a failure
            self.worst = value

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.0e} cases={self.cases}"


SOFTMAX_TAGS = (Variant.EXACT, Variant.EFFICIENT, Variant.KEY_OFFSET, Variant.LINFORMER, Variant.LOCAL_WINDOWED)


def run_suite(L, w, h, frames, P, d, d_q, poolings, seeds, bandwidth=2, segments=4) -> list[CheckResult]:
    checks = {
        "pooled_identity": CheckResult("pooled_identity", IDENTITY_TOL),
        "degenerate_pooling": CheckResult("degenerate_pooling", EXACT_TOL),
        "shift_equivalence": CheckResult("shift_equivalence", EXACT_TOL),
        "window_constant": CheckResult("window_constant", EXACT_TOL),
        "convexity": CheckResult("convexity", EXACT_TOL),
        "stack_consistency": CheckResult("stack_consistency", STACK_TOL),
    }
    local_ok = L % segments == 0 and (frames * w * h + P) % segments == 0
    for seed in seeds:
        q = gen_queries(L, d, seed)
        for bank in (gen_projected_bank(frames, w, h, P, d, seed, None), gen_projected_bank(frames, w, h, P, d, seed, bandwidth)):
            checks["degenerate_pooling"].update(degenerate_pooling_error(q, bank))
            for spec in poolings:
                checks["pooled_identity"].update(pooled_identity_error(q, bank, spec))
                checks["shift_equivalence"].update(shift_equivalence_error(q, bank, spec))
                checks["window_constant"].update(window_constant_error(q, bank, spec))
            variants = [AttentionVariant(Variant.EXACT)]
            variants += [AttentionVariant(t, spec) for spec in poolings for t in SOFTMAX_TAGS if t.pooled]
            if local_ok:
                variants.append(AttentionVariant(Variant.LOCAL_WINDOWED, segments=segments))
            for variant in variants:
                checks["convexity"].update(convexity_violation(q, bank, variant))
        raw = gen_memory_bank(frames, w, h, P, d_q, seed)
        x = np.random.default_rng([seed, 7]).uniform(-1.0, 1.0, size=(L, d_q))
        blocks = [init_block_params(d_q, d_q, d, max(d, 2 * d_q), seed * 2 + i) for i in range(2)]
        checks["stack_consistency"].update(stack_consistency_error(x, raw, blocks))
    return list(checks.values())
