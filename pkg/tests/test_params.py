"""Parameter vector layout, views, checksums, and serialization."""

import io

import numpy as np
import pytest

from nerfreg.params import LayoutEntry, ParamVector, load_params, save_params


def small_pv(dtype=np.float32):
    pv = ParamVector.zeros([("a.W", (2, 3)), ("a.b", (3,)), ("c", (4,))], dtype)
    pv.values[:] = np.arange(len(pv), dtype=dtype)
    return pv


def test_layout_offsets_and_sizes():
    pv = small_pv()
    assert len(pv) == 6 + 3 + 4
    assert pv.names == ("a.W", "a.b", "c")
    assert pv.entry("a.b").offset == 6
    assert pv.entry("c").end == 13


def test_view_is_writable_and_shaped():
    pv = small_pv()
    w = pv.view("a.W")
    assert w.shape == (2, 3)
    w[1, 2] = -7.0
    assert pv.values[5] == -7.0


def test_subvector_shares_memory_and_rebases():
    pv = small_pv()
    sub = pv.subvector("a.")
    assert sub.names == ("a.W", "a.b")
    assert sub.entry("a.W").offset == 0
    sub.values[0] = 99.0
    assert pv.values[0] == 99.0


def test_subvector_missing_prefix():
    with pytest.raises(KeyError):
        small_pv().subvector("nope.")


def test_layout_must_tile_exactly():
    with pytest.raises(ValueError):
        ParamVector(np.zeros(5, np.float32), [LayoutEntry("a", 0, (2,))])
    with pytest.raises(ValueError):
        ParamVector(np.zeros(4, np.float32),
                    [LayoutEntry("a", 0, (2,)), LayoutEntry("b", 3, (1,))])
    with pytest.raises(ValueError):
        ParamVector(np.zeros(4, np.float32),
                    [LayoutEntry("a", 0, (2,)), LayoutEntry("a", 2, (2,))])


def test_checksum_tracks_content():
    pv = small_pv()
    before = pv.checksum()
    assert before == small_pv().checksum()
    pv.values[3] += 1.0
    assert pv.checksum() != before


def test_dtype_validation():
    with pytest.raises(ValueError):
        ParamVector(np.zeros(2, np.int32), [LayoutEntry("a", 0, (2,))])


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_save_load_round_trip(dtype):
    pv = small_pv(dtype)
    pv.values[:] = np.random.default_rng(0).normal(size=len(pv)).astype(dtype)
    buf = io.BytesIO()
    save_params(pv, buf)
    buf.seek(0)
    back = load_params(buf)
    assert back.dtype == pv.dtype
    assert back.same_layout(pv)
    np.testing.assert_array_equal(back.values, pv.values)


def test_load_rejects_corrupted_blob():
    pv = small_pv()
    buf = io.BytesIO()
    save_params(pv, buf)
    raw = bytearray(buf.getvalue())
    raw[-1] ^= 0xFF
    with pytest.raises(ValueError, match="checksum"):
        load_params(io.BytesIO(bytes(raw)))


def test_load_rejects_bad_magic():
    with pytest.raises(ValueError):
        load_params(io.BytesIO(b"NOTPARAMS f4 0 0\nEND 0\n"))
