"""Seeded synthetic memory tokens with a tunable amount of spatial smoothness.

Smooth grids are band-limited cosine fields: every channel sums
``bandwidth`` plane waves whose spatial frequency is at most
``bandwidth / max(w, h)`` cycles per token, so lowering the bandwidth both
removes modes and slows the remaining ones down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LocalityError
from .kernels import MemoryBank, ProjectedBank, _as_grid


@dataclass(frozen=True)
class SmoothnessSpec:
    """Knobs for :func:`gen_smooth_grid`.

    ``c_target``, when given, rescales the field so that
    :func:`measure_locality` of the result equals it (for grids with some
    variation); ``amplitude`` then only matters through the mode mix.
    """

    bandwidth: int = 2
    amplitude: float = 1.0
    seed: int = 0
    c_target: float | None = None

    def __post_init__(self):
        if self.bandwidth < 1:
            raise ValueError(f"bandwidth must be >= 1, got {self.bandwidth}")
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        if self.c_target is not None and self.c_target < 0:
            raise ValueError(f"c_target must be >= 0, got {self.c_target}")


def gen_smooth_grid(w: int, h: int, d: int, spec: SmoothnessSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    b = spec.bandwidth
    f_max = b / max(w, h)
    fx = rng.uniform(0.0, f_max, size=(b, d))
    fy = rng.uniform(0.0, f_max, size=(b, d))
    phase = rng.uniform(0.0, 2 * np.pi, size=(b, d))
    p = np.arange(w, dtype=np.float64)[:, None, None, None]
    q = np.arange(h, dtype=np.float64)[None, :, None, None]
    arg = 2 * np.pi * (fx * p + fy * q) + phase  # (w, h, b, d)
    grid = np.cos(arg).sum(axis=2) * (spec.amplitude / np.sqrt(b))
    if spec.c_target is not None:
        c = measure_locality(grid) if w * h >= 2 else 0.0
        if c > 0:
            grid = grid * np.sqrt(spec.c_target / c)
    return np.ascontiguousarray(grid)


def gen_random_grid(w: int, h: int, d: int, seed: int) -> np.ndarray:
    """I.i.d. uniform [-1, 1] tokens; the non-smooth baseline."""
    return np.random.default_rng(seed).uniform(-1.0, 1.0, size=(w, h, d))


def measure_locality(grid, adjacency: str = "raster") -> float:
    """Smallest c with ||k_i - k_{i+1}||^2 <= c / n^2 over adjacent token pairs.

    ``adjacency="raster"`` walks tokens in row-major order (including the jump
    from the end of one row to the start of the next); ``"grid"`` uses the
    horizontal and vertical 4-neighbours instead.
    """
    grid = _as_grid(grid)
    w, h, d = grid.shape
    n = w * h
    if n < 2:
        raise LocalityError(f"locality needs at least two tokens, grid is {w}x{h}")
    if adjacency == "raster":
        flat = grid.reshape(n, d)
        worst = np.max(np.sum(np.diff(flat, axis=0) ** 2, axis=1))
    elif adjacency == "grid":
        parts = []
        if w > 1:
            parts.append(np.sum(np.diff(grid, axis=0) ** 2, axis=-1).ravel())
        if h > 1:
            parts.append(np.sum(np.diff(grid, axis=1) ** 2, axis=-1).ravel())
        worst = np.max(np.concatenate(parts))
    else:
        raise ValueError(f"unknown adjacency {adjacency!r}")
    return float(n * n * worst)


def _child_seeds(seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(count)]


def gen_projected_bank(
    frames: int,
    w: int,
    h: int,
    P: int,
    d: int,
    seed: int,
    bandwidth: int | None = 2,
    amplitude: float = 1.0,
) -> ProjectedBank:
    """Keys/values for a multi-frame bank; ``bandwidth=None`` gives i.i.d. tokens.

    Keys and values of each frame are independent fields. Pointer tokens are
    always i.i.d. uniform [-amplitude, amplitude].
    """
    seeds = _child_seeds(seed, 2 * frames + 1)
    grids = []
    for s in seeds[: 2 * frames]:
        if bandwidth is None:
            grids.append(amplitude * gen_random_grid(w, h, d, s))
        else:
            grids.append(gen_smooth_grid(w, h, d, SmoothnessSpec(bandwidth, amplitude, s)))
    ptr = np.random.default_rng(seeds[-1]).uniform(-amplitude, amplitude, size=(2, P, d))
    return ProjectedBank(np.stack(grids[0::2]), np.stack(grids[1::2]), ptr[0], ptr[1])


def gen_memory_bank(
    frames: int, w: int, h: int, P: int, d_m: int, seed: int, bandwidth: int | None = 2
) -> MemoryBank:
    """Raw (unprojected) memory tokens built the same way as :func:`gen_projected_bank`."""
    seeds = _child_seeds(seed, frames + 1)
    grids = [
        gen_random_grid(w, h, d_m, s) if bandwidth is None else gen_smooth_grid(w, h, d_m, SmoothnessSpec(bandwidth, 1.0, s))
        for s in seeds[:frames]
    ]
    ptr = np.random.default_rng(seeds[-1]).uniform(-1.0, 1.0, size=(P, d_m))
    return MemoryBank(np.stack(grids), ptr)


def gen_queries(L: int, d: int, seed: int, scale: float = 1.0) -> np.ndarray:
    """I.i.d. uniform [-scale, scale] query tokens."""
    return np.random.default_rng([seed, 0x51]).uniform(-scale, scale, size=(L, d))
