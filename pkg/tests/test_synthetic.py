import numpy as np
import pytest

from effmem.errors import LocalityError
from effmem.kernels import PoolingSpec, cross_attention, efficient_cross_attention
from effmem.synthetic import (
    SmoothnessSpec,
    gen_memory_bank,
    gen_projected_bank,
    gen_queries,
    gen_random_grid,
    gen_smooth_grid,
    measure_locality,
)
from effmem.tensor import relative_frobenius_error

SEEDS = range(20)


def test_smooth_grid_deterministic():
    spec = SmoothnessSpec(bandwidth=3, amplitude=2.0, seed=5)
    assert gen_smooth_grid(8, 6, 4, spec).tobytes() == gen_smooth_grid(8, 6, 4, spec).tobytes()
    assert gen_smooth_grid(8, 6, 4, spec).shape == (8, 6, 4)


def test_tiny_target_gives_near_constant_grid():
    g = gen_smooth_grid(16, 16, 4, SmoothnessSpec(bandwidth=1, seed=0, c_target=1e-9))
    assert measure_locality(g) == pytest.approx(1e-9, rel=1e-9)
    assert np.ptp(g, axis=(0, 1)).max() < 1e-5


def test_c_target_is_hit():
    g = gen_smooth_grid(8, 8, 3, SmoothnessSpec(bandwidth=2, seed=1, c_target=250.0))
    assert measure_locality(g) == pytest.approx(250.0, rel=1e-12)


def test_lower_bandwidth_is_smoother_on_average():
    def mean_c(b):
        return np.mean([measure_locality(gen_smooth_grid(16, 16, 8, SmoothnessSpec(b, 1.0, s))) for s in SEEDS])

    levels = [mean_c(b) for b in (1, 2, 4, 8)]
    assert all(a <= b for a, b in zip(levels, levels[1:])), levels


def test_random_grid():
    assert gen_random_grid(4, 4, 3, 9).tobytes() == gen_random_grid(4, 4, 3, 9).tobytes()
    assert gen_random_grid(1, 1, 5, 0).shape == (1, 1, 5)
    g = gen_random_grid(8, 8, 16, 2)
    assert g.min() >= -1 and g.max() <= 1


@pytest.mark.parametrize("adjacency", ["raster", "grid"])
def test_random_grid_is_less_local_than_smooth(adjacency):
    # amplitude sqrt(2/3) matches the per-channel variance (1/3) of uniform [-1, 1]
    amp = np.sqrt(2 / 3)
    rand = np.mean([measure_locality(gen_random_grid(16, 16, 8, s), adjacency) for s in SEEDS])
    smooth = np.mean(
        [measure_locality(gen_smooth_grid(16, 16, 8, SmoothnessSpec(2, amp, s)), adjacency) for s in SEEDS]
    )
    assert rand > 1.2 * smooth


def test_locality_constant_grid_is_zero():
    assert measure_locality(np.full((3, 5, 2), 4.2)) == 0.0


def test_locality_hand_value():
    # n = 2 tokens, squared gap 1 -> c = n^2 * 1 = 4
    assert measure_locality(np.array([[[0.0], [1.0]]])) == 4.0


def test_locality_raster_includes_row_wrap():
    g = np.array([[[0.0], [0.0]], [[3.0], [3.0]]])
    assert measure_locality(g, "raster") == 16 * 9.0
    assert measure_locality(g, "grid") == 16 * 9.0
    g2 = np.array([[[0.0], [1.0]], [[0.0], [1.0]]])
    assert measure_locality(g2, "raster") == 16.0
    assert measure_locality(g2, "grid") == 16.0


def test_locality_is_stable_and_positive():
    g = gen_smooth_grid(8, 8, 4, SmoothnessSpec(2, 1.0, 3))
    c = measure_locality(g)
    assert 0 < c < np.inf
    assert measure_locality(g) == c


def test_locality_needs_two_tokens():
    with pytest.raises(LocalityError):
        measure_locality(np.zeros((1, 1, 3)))
    with pytest.raises(ValueError):
        measure_locality(np.zeros((2, 2, 1)), "diagonal")


def test_shuffling_increases_locality():
    hits = 0
    for s in range(40):
        g = gen_smooth_grid(16, 16, 8, SmoothnessSpec(2, 1.0, s))
        flat = g.reshape(-1, 8)
        shuffled = flat[np.random.default_rng(1000 + s).permutation(len(flat))].reshape(g.shape)
        hits += measure_locality(shuffled) > measure_locality(g)
    assert hits / 40 >= 0.95


def test_bandwidth_one_pooling_error_is_small():
    errs = []
    for s in range(5):
        bank = gen_projected_bank(1, 64, 64, 4, 32, s, bandwidth=1)
        q = gen_queries(128, 32, s)
        exact = cross_attention(q, bank.keys(), bank.values())
        errs.append(relative_frobenius_error(efficient_cross_attention(q, bank, PoolingSpec(2, 2)), exact))
    assert max(errs) <= 1e-3


def test_bank_generators_shapes_and_determinism():
    b = gen_projected_bank(3, 4, 6, 5, 7, seed=2, bandwidth=2)
    assert b.k_spatial.shape == (3, 4, 6, 7) and b.k_pointers.shape == (5, 7)
    assert not np.array_equal(b.k_spatial, b.v_spatial)
    assert gen_projected_bank(3, 4, 6, 5, 7, 2, 2).keys().tobytes() == b.keys().tobytes()
    raw = gen_memory_bank(2, 4, 4, 0, 3, seed=0, bandwidth=None)
    assert raw.P == 0 and raw.n == 32


@pytest.mark.parametrize("kwargs", [dict(bandwidth=0), dict(amplitude=0.0), dict(c_target=-1.0)])
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SmoothnessSpec(**kwargs)
