import struct

import numpy as np
import pytest

from effmem.errors import ShapeError
from effmem.synthetic import gen_memory_bank
from effmem.tokenio import MAGIC, dump_bank, load_bank, read_tokens, write_tokens


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    m = rng.normal(size=(7, 3)) * 10.0 ** rng.integers(-300, 300, size=(7, 3))
    m[0, 0] = -0.0
    path = tmp_path / "t.bin"
    write_tokens(path, m)
    back, hdr = read_tokens(path)
    assert back.tobytes() == m.tobytes()
    assert (hdr.rows, hdr.cols, hdr.frames) == (7, 3, 0)


def test_header_layout(tmp_path):
    path = tmp_path / "t.bin"
    write_tokens(path, np.arange(6.0).reshape(3, 2), w=1, h=1, frames=2, P=1)
    raw = path.read_bytes()
    assert len(raw) == 8 * 8 + 6 * 8
    assert struct.unpack("<8d", raw[:64]) == (MAGIC, 1.0, 3.0, 2.0, 1.0, 1.0, 2.0, 1.0)
    assert struct.unpack("<6d", raw[64:]) == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)


def test_bank_round_trip(tmp_path):
    bank = gen_memory_bank(3, 4, 2, 5, 6, seed=4)
    path = tmp_path / "bank.bin"
    dump_bank(path, bank)
    back = load_bank(path)
    assert back.spatial.tobytes() == bank.spatial.tobytes()
    assert back.pointers.tobytes() == bank.pointers.tobytes()


def test_layout_mismatch_and_corruption(tmp_path):
    with pytest.raises(ShapeError):
        write_tokens(tmp_path / "x.bin", np.zeros((5, 2)), w=2, h=2, frames=1, P=0)
    bad = tmp_path / "bad.bin"
    bad.write_bytes(struct.pack("<8d", 1.0, 1.0, 1, 1, 0, 0, 0, 0))
    with pytest.raises(ValueError, match="not a token dump"):
        read_tokens(bad)
    short = tmp_path / "short.bin"
    short.write_bytes(struct.pack("<9d", MAGIC, 1.0, 2, 1, 0, 0, 0, 0, 1.0))
    with pytest.raises(ValueError, match="expected 2"):
        read_tokens(short)
