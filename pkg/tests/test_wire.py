import pytest
from hypothesis import given
from hypothesis import strategies as st

from lockcoin.wire import DecodeError, Reader, Writer, int_to_bytes


@given(st.integers(min_value=0, max_value=2**4096))
def test_bigint_roundtrip(x):
    r = Reader(Writer().bigint(x).getvalue())
    assert r.bigint() == x
    r.finish()


@given(st.lists(st.binary(max_size=64), max_size=8), st.integers(0, 2**64 - 1))
def test_mixed_fields_roundtrip(blobs, n):
    w = Writer().u64(n)
    for b in blobs:
        w.blob(b)
    r = Reader(w.getvalue())
    assert r.u64() == n
    assert [r.blob() for _ in blobs] == blobs
    assert r.remaining == 0


def test_length_prefix_is_big_endian_u32():
    assert Writer().blob(b"\xaa\xbb").getvalue() == b"\x00\x00\x00\x02\xaa\xbb"
    assert int_to_bytes(0) == b"\x00"
    assert int_to_bytes(256) == b"\x01\x00"


def test_truncated_input_rejected():
    data = Writer().blob(b"hello").getvalue()
    with pytest.raises(DecodeError):
        Reader(data[:-1]).blob()


def test_trailing_bytes_rejected():
    r = Reader(Writer().u8(1).getvalue() + b"\x00")
    r.u8()
    with pytest.raises(DecodeError):
        r.finish()


def test_non_canonical_bigint_rejected():
    # a leading zero byte would give two encodings of the same integer
    with pytest.raises(DecodeError):
        Reader(b"\x00\x00\x00\x02\x00\x05").bigint()
