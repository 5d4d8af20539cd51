import dataclasses

import numpy as np
import pytest

from effmem.analysis import attention_ratio, compare_variants, flop_breakdown, flop_count, time_call
from effmem.errors import PoolingSpecError, SegmentationError
from effmem.kernels import AttentionVariant, PoolingSpec, Variant
from effmem.synthetic import gen_projected_bank, gen_queries

EXACT = AttentionVariant(Variant.EXACT)


def pooled(tag=Variant.EFFICIENT, lw=2, lh=2):
    return AttentionVariant(tag, PoolingSpec(lw, lh))


@pytest.fixture(scope="module")
def instance():
    return gen_queries(32, 16, 0), gen_projected_bank(2, 8, 8, 4, 16, 0, bandwidth=2)


def test_exact_self_comparison_is_zero(instance):
    q, bank = instance
    (rep,) = compare_variants(q, bank, [EXACT], repeats=1, warmup=0)
    assert rep.rel_frobenius == 0.0 and rep.max_row_rel == 0.0
    assert rep.wall_ns_exact > 0 and rep.wall_ns_variant > 0
    assert (rep.L, rep.n, rep.P, rep.d) == (32, 128, 4, 16)


def test_degenerate_pooled_reports(instance):
    q, bank = instance
    variants = [pooled(t, 1, 1) for t in (Variant.EFFICIENT, Variant.KEY_OFFSET, Variant.LINFORMER)]
    for rep in compare_variants(q, bank, variants, repeats=1, warmup=0):
        assert rep.rel_frobenius <= 1e-12


def test_reports_follow_request_order_and_are_deterministic(instance):
    q, bank = instance
    variants = [pooled(lw=4, lh=4), EXACT, AttentionVariant(Variant.LINEAR), pooled()]
    a = compare_variants(q, bank, variants, repeats=1, warmup=0)
    b = compare_variants(q, bank, variants, repeats=1, warmup=0)
    assert [r.variant for r in a] == ["EfficientRebalanced[4x4]", "Exact", "Linear", "EfficientRebalanced[2x2]"]
    strip = lambda r: dataclasses.replace(r, wall_ns_exact=0, wall_ns_variant=0)  # noqa: E731
    assert [strip(r) for r in a] == [strip(r) for r in b]
    assert a[0].rel_frobenius >= a[3].rel_frobenius
    assert a[0].max_row_rel >= a[0].rel_frobenius * 0.5


def test_time_call_median():
    calls = []
    t, result = time_call(lambda: calls.append(1) or len(calls), repeats=5, warmup=2)
    assert len(calls) == 7 and result == 7 and t >= 1


# ---------------------------------------------------------------------------
# operation counts


def test_exact_unit_count():
    assert flop_count(EXACT, 1, 1, 0, 1) == 7


def test_pooled_count_is_quarter_plus_pooling():
    L, n, d = 64, 1024, 32
    e = flop_breakdown(EXACT, L, n, 0, d)
    p = flop_breakdown(pooled(), L, n, 0, d)
    assert 4 * p.attention == e.attention
    assert 4 * p.normalize == e.normalize
    assert p.pooling == n * d
    assert attention_ratio(pooled(), L, n, 0, d) == 4.0


def test_large_shape_ratio():
    L, n, P, d = 4096, 28672, 64, 256
    e = flop_breakdown(EXACT, L, n, P, d)
    p = flop_breakdown(pooled(), L, n, P, d)
    # (n + P) / (n / 4 + P) = 28736 / 7232
    assert e.attention * 7232 == p.attention * 28736
    assert round(attention_ratio(pooled(), L, n, P, d), 2) == 3.97


@pytest.mark.parametrize("n", [1024, 4096, 16384])
@pytest.mark.parametrize("L", [1, 64])
def test_pooling_pays_for_itself(n, L):
    d = n // 4
    assert flop_count(EXACT, L, n, 8, d) > flop_count(pooled(), L, n, 8, d)


def test_flop_count_is_integer():
    assert isinstance(flop_count(pooled(lw=4, lh=2), 10, 64, 3, 5), int)


def test_flop_errors():
    with pytest.raises(PoolingSpecError):
        flop_count(pooled(lw=3, lh=1), 4, 16, 0, 4)
    with pytest.raises(SegmentationError):
        flop_count(AttentionVariant(Variant.LOCAL_WINDOWED, segments=4), 6, 16, 0, 4)


def test_baseline_counts():
    L, n, P, d = 8, 16, 0, 4
    local = flop_breakdown(AttentionVariant(Variant.LOCAL_WINDOWED, segments=4), L, n, P, d)
    assert local.attention * 4 == flop_breakdown(EXACT, L, n, P, d).attention
    lin = flop_breakdown(AttentionVariant(Variant.LINEAR), L, n, P, d)
    assert lin.attention == 2 * n * d * d + 2 * L * d * d + 2 * n * d + 2 * L * d


def test_report_error_shrinks_with_bandwidth():
    variant = [pooled()]
    means = []
    for bandwidth in (4, 2, 1):
        errs = [
            compare_variants(gen_queries(64, 16, s), gen_projected_bank(1, 16, 16, 4, 16, s, bandwidth), variant, 1, 0)[0].rel_frobenius
            for s in range(20)
        ]
        means.append(np.mean(errs))
    assert means[0] >= means[1] >= means[2]
