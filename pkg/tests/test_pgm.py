import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eigbench.pgm import PnmError, read_pnm, write_pnm


def test_p5_roundtrip(tmp_path):
    arr = np.arange(12, dtype=np.uint8).reshape(3, 4)
    path = tmp_path / "a.pgm"
    write_pnm(path, arr)
    np.testing.assert_array_equal(read_pnm(path), arr)


def test_p6_roundtrip(tmp_path):
    arr = np.arange(24, dtype=np.uint8).reshape(2, 4, 3)
    path = tmp_path / "a.ppm"
    write_pnm(path, arr)
    np.testing.assert_array_equal(read_pnm(path), arr)


def test_header_layout(tmp_path):
    path = tmp_path / "a.pgm"
    write_pnm(path, np.zeros((2, 3), dtype=np.uint8))
    assert path.read_bytes() == b"P5\n3 2\n255\n" + b"\x00" * 6


def test_comments_skipped(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 2\n# another\n255\n\x01\x02\x03\x04")
    np.testing.assert_array_equal(read_pnm(path),
                                  np.array([[1, 2], [3, 4]], dtype=np.uint8))


def test_bad_magic(tmp_path):
    path = tmp_path / "x.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0")
    with pytest.raises(PnmError):
        read_pnm(path)


def test_truncated_raster(tmp_path):
    path = tmp_path / "x.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\x00\x00")
    with pytest.raises(PnmError):
        read_pnm(path)


def test_sixteen_bit_rejected(tmp_path):
    path = tmp_path / "x.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(PnmError):
        read_pnm(path)


@given(st.integers(min_value=1, max_value=12), st.integers(min_value=1, max_value=12),
       st.integers(min_value=0, max_value=2**32 - 1))
def test_roundtrip_property(h, w, seed):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(h, w), dtype=np.uint8)
    import tempfile
    from pathlib import Path

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "r.pgm"
        write_pnm(path, arr)
        np.testing.assert_array_equal(read_pnm(path), arr)
