import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from pikachu.curve import (
    INFINITY,
    N,
    G,
    InvalidPointError,
    Point,
    base_mul,
    check_linear,
    eval_commitments,
    point_sum,
    small_mul,
)

scalars = st.integers(min_value=1, max_value=N - 1)


def test_known_generator_multiples():
    # published x coordinates of 2G and 3G
    assert base_mul(2).x == 0xC6047F9441ED7D6D3045406E95C07CD85C778E4B8CEF3CA7ABAC09B95C709EE5
    assert base_mul(3).x == 0xF9308A019258C31049344F85F89D5229B531C845836F99B08601F113BCE036F9
    assert base_mul(1) == G
    assert base_mul(N) == INFINITY
    assert base_mul(0) == INFINITY


@settings(max_examples=60, deadline=None)
@given(scalars)
def test_base_mul_matches_openssl(k):
    assert base_mul(k).to_bytes() == oracle.openssl_pubkey(k)


@settings(max_examples=40, deadline=None)
@given(scalars, scalars)
def test_generic_mul_matches_affine_reference(a, k):
    pt = base_mul(a)
    ref = oracle.mul(k, oracle.decompress(pt.to_bytes()))
    assert (pt * k).to_bytes() == oracle.compress(ref)


@settings(max_examples=40, deadline=None)
@given(scalars, scalars)
def test_group_laws(a, b):
    A, B = base_mul(a), base_mul(b)
    assert A + B == B + A == base_mul((a + b) % N)
    assert A - A == INFINITY
    assert A + INFINITY == A
    assert -(-A) == A


@settings(max_examples=30, deadline=None)
@given(scalars, st.integers(min_value=0, max_value=300))
def test_small_mul(a, k):
    A = base_mul(a)
    assert small_mul(k, A) == A * k


@settings(max_examples=50, deadline=None)
@given(scalars)
def test_encoding_roundtrip(k):
    pt = base_mul(k)
    assert Point.from_bytes(pt.to_bytes()) == pt
    assert Point.fromhex(pt.hex()) == pt


def test_identity_encoding():
    assert INFINITY.to_bytes() == bytes(33)
    assert Point.from_bytes(bytes(33)) == INFINITY


@pytest.mark.parametrize(
    "data",
    [
        b"",
        bytes(32),
        b"\x04" + bytes(32),
        b"\x02" + (5).to_bytes(32, "big"),  # x^3 + 7 = 132 is a non-residue
        b"\x02" + oracle.P.to_bytes(32, "big"),
    ],
)
def test_bad_encodings_rejected(data):
    with pytest.raises(InvalidPointError):
        Point.from_bytes(data)


def test_off_curve_coordinates_rejected():
    with pytest.raises(InvalidPointError):
        Point(G.x, G.y + 1)
    with pytest.raises(InvalidPointError):
        Point(None, 3)


def test_points_are_immutable():
    with pytest.raises(AttributeError):
        G.x = 1


@settings(max_examples=20, deadline=None)
@given(st.lists(scalars, min_size=0, max_size=6))
def test_point_sum(ks):
    assert point_sum(base_mul(k) for k in ks) == base_mul(sum(ks) % N)


@settings(max_examples=20, deadline=None)
@given(st.lists(scalars, min_size=1, max_size=5), st.integers(min_value=1, max_value=30))
def test_eval_commitments_is_polynomial_in_exponent(coeffs, x):
    value = sum(c * x**k for k, c in enumerate(coeffs)) % N
    assert eval_commitments(x, [base_mul(c) for c in coeffs]) == base_mul(value)


@settings(max_examples=30, deadline=None)
@given(scalars, scalars, scalars)
def test_check_linear(r, c, y):
    R, Y = base_mul(r), base_mul(y)
    z = (r + c * y) % N
    assert check_linear(z, R, c, Y)
    assert not check_linear((z + 1) % N, R, c, Y)
