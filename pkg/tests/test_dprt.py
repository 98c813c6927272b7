import numpy as np
import pytest

from ddrmpr import dprt


def test_real_round_trip(tmp_path, rng):
    arr = rng.standard_normal((3, 5, 2)).astype(np.float32)
    path = tmp_path / "t.dprt"
    dprt.save(path, arr)
    back = dprt.load(path)
    assert back.shape == arr.shape
    assert np.array_equal(back.astype(np.float32), arr)


def test_complex_round_trip(tmp_path, rng):
    arr = (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))).astype(np.complex64)
    path = tmp_path / "c.dprt"
    dprt.save(path, arr)
    back = dprt.load(path)
    assert np.array_equal(back.astype(np.complex64), arr)


def test_header_layout():
    buf = dprt.dump_bytes(np.zeros((2, 3), dtype=np.float32))
    assert buf[:4] == b"DPRT"
    assert buf[4] == 1  # version
    assert buf[5] == 0  # f32 real
    assert buf[6] == 2  # rank
    assert int.from_bytes(buf[7:11], "little") == 2
    assert int.from_bytes(buf[11:15], "little") == 3
    assert len(buf) == 15 + 4 * 6


def test_bad_magic_and_truncation():
    good = dprt.dump_bytes(np.ones(4, dtype=np.float32))
    with pytest.raises(dprt.DprtError):
        dprt.load_bytes(b"XXXX" + good[4:])
    with pytest.raises(dprt.DprtError):
        dprt.load_bytes(good[:-2])
    with pytest.raises(dprt.DprtError):
        dprt.load_bytes(good[:6])
