import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pikachu.codec import DecodeError, Reader, Writer, scalar_bytes, scalar_from_bytes
from pikachu.curve import N, base_mul
from pikachu.dkg import MISSING, ComplaintAnswer, ComplaintVector, DealBroadcast, DealPrivate, decode_message
from pikachu.frost import FinalSig, PartialSig, PreProcess, RestartSigning

scalars = st.integers(min_value=0, max_value=N - 1)
indices = st.integers(min_value=1, max_value=2**32 - 1)
points = st.integers(min_value=1, max_value=2**64).map(base_mul)


def test_writer_reader_roundtrip():
    pt = base_mul(7)
    data = Writer().u8(3).u32(70000).u64(2**40).scalar(N - 1).point(pt).blob(b"xy").text("hé").raw(b"!").getvalue()
    r = Reader(data)
    assert (r.u8(), r.u32(), r.u64(), r.scalar(), r.point(), r.blob(), r.text(), r.raw(1)) == (3, 70000, 2**40, N - 1, pt, b"xy", "hé", b"!")
    r.done()


def test_reader_errors():
    with pytest.raises(DecodeError):
        Reader(b"\x00\x00").u32()
    with pytest.raises(DecodeError):
        Reader(b"\x00").done()
    with pytest.raises(DecodeError):
        scalar_from_bytes(N.to_bytes(32, "big"))
    with pytest.raises(ValueError):
        scalar_bytes(N)
    with pytest.raises(DecodeError):
        Reader(b"\x05" + bytes(32)).point()


messages = st.one_of(
    st.builds(DealBroadcast, indices, st.lists(points, max_size=4).map(tuple)),
    st.builds(DealPrivate, indices, indices, scalars),
    st.builds(ComplaintVector, indices, st.lists(st.one_of(st.none(), st.just(MISSING), scalars), max_size=6).map(tuple)),
    st.builds(ComplaintAnswer, indices, indices, scalars),
    st.builds(PreProcess, indices, st.lists(st.tuples(points, points), max_size=3).map(tuple)),
    st.builds(PartialSig, indices, scalars),
    st.builds(RestartSigning, st.lists(indices, max_size=5).map(tuple)),
    st.builds(FinalSig, st.binary(min_size=32, max_size=32), scalars, points),
)


@settings(max_examples=150, deadline=None)
@given(messages)
def test_message_roundtrip(msg):
    data = msg.encode()
    assert type(msg).decode(data) == msg
    for cut in range(len(data)):
        with pytest.raises(ValueError):
            type(msg).decode(data[:cut])


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_dkg_decoder_never_crashes_on_garbage(data):
    try:
        msg = decode_message(data)
    except ValueError:
        return
    assert decode_message(msg.encode()) == msg


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([PreProcess, PartialSig, RestartSigning, FinalSig]), st.binary(max_size=120))
def test_frost_decoders_reject_or_roundtrip(cls, data):
    try:
        msg = cls.decode(data)
    except ValueError:
        return
    assert msg.encode() == data
