"""Binary token dumps.

Layout: eight little-endian float64 header values
``(magic, version, rows, cols, w, h, frames, P)`` followed by ``rows * cols``
little-endian float64 values in row-major order. Layout fields that do not
apply are written as 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .kernels import MemoryBank
from .tensor import as_tokens

MAGIC = float(0x454D544B)  # "EMTK"
VERSION = 1.0
_LE = np.dtype("<f8")


@dataclass(frozen=True)
class TokenHeader:
    rows: int
    cols: int
    w: int = 0
    h: int = 0
    frames: int = 0
    P: int = 0


def write_tokens(path, tokens, w: int = 0, h: int = 0, frames: int = 0, P: int = 0) -> None:
    tokens = as_tokens(tokens, "tokens")
    rows, cols = tokens.shape
    if frames and rows != frames * w * h + P:
        raise ShapeError(f"{rows} rows do not match frames={frames}, w={w}, h={h}, P={P}")
    header = np.array([MAGIC, VERSION, rows, cols, w, h, frames, P], dtype=_LE)
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(tokens.astype(_LE, copy=False).tobytes())


def read_tokens(path) -> tuple[np.ndarray, TokenHeader]:
    raw = np.fromfile(path, dtype=_LE)
    if raw.size < 8 or raw[0] != MAGIC:
        raise ValueError(f"{path}: not a token dump")
    if raw[1] != VERSION:
        raise ValueError(f"{path}: unsupported version {raw[1]}")
    rows, cols, w, h, frames, P = (int(v) for v in raw[2:8])
    body = raw[8:]
    if body.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} values, found {body.size}")
    return body.reshape(rows, cols).astype(np.float64), TokenHeader(rows, cols, w, h, frames, P)


def dump_bank(path, bank: MemoryBank) -> None:
    w, h = bank.grid_shape
    write_tokens(path, bank.tokens(), w=w, h=h, frames=bank.frames, P=bank.P)


def load_bank(path) -> MemoryBank:
    tokens, hdr = read_tokens(path)
    if hdr.frames < 1:
        raise ValueError(f"{path}: dump carries no grid layout")
    n = hdr.frames * hdr.w * hdr.h
    spatial = tokens[:n].reshape(hdr.frames, hdr.w, hdr.h, hdr.cols)
    return MemoryBank(spatial, tokens[n:])
