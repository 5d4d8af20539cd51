"""Dense float64 token matrices: matmul, row softmax and error norms.

A token matrix is a 2-D, C-contiguous ``float64`` numpy array. Everything in
the package passes plain arrays around; :func:`as_tokens` is the single
normalisation point.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

__all__ = ["as_tokens", "matmul", "row_softmax", "relative_frobenius_error", "row_relative_errors"]


def as_tokens(x, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` to a row-major 2-D float64 array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_tokens(a, "a")
    b = as_tokens(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def row_softmax(m) -> np.ndarray:
    """Numerically stable softmax applied to every row independently."""
    m = as_tokens(m, "logits")
    if m.shape[1] < 1:
        raise ShapeError("row_softmax needs at least one column")
    if np.isnan(m).any():
        raise NumericError("row_softmax input contains NaN")
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def relative_frobenius_error(approx, exact) -> float:
    """``||approx - exact||_F / ||exact||_F`` (0 when both vanish)."""
    approx = as_tokens(approx, "approx")
    exact = as_tokens(exact, "exact")
    if approx.shape != exact.shape:
        raise ShapeError(f"shape mismatch: approx {approx.shape} vs exact {exact.shape}")
    num = float(np.linalg.norm(approx - exact))
    den = float(np.linalg.norm(exact))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return num / den


def row_relative_errors(approx, exact) -> np.ndarray:
    """Per-row relative L2 error; rows with a zero reference use absolute error."""
    approx = as_tokens(approx, "approx")
    exact = as_tokens(exact, "exact")
    if approx.shape != exact.shape:
        raise ShapeError(f"shape mismatch: approx {approx.shape} vs exact {exact.shape}")
    num = np.linalg.norm(approx - exact, axis=1)
    den = np.linalg.norm(exact, axis=1)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), num)
