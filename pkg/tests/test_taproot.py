import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from pikachu.curve import INFINITY, N, base_mul
from pikachu.schnorr import SchnorrSignature, Tag
from pikachu.taproot import sign_key_path, tweak_pubkey, tweak_scalar, tweak_seckey, tweak_signature, verify_key_path

scalars = st.integers(min_value=1, max_value=N - 1)


@settings(max_examples=30, deadline=None)
@given(scalars, st.binary(max_size=40))
def test_tweak_matches_reference(sk, commitment):
    P = base_mul(sk)
    key = tweak_pubkey(P, commitment)
    t = oracle.h_scalar("TAPTWEAK", P.to_bytes() + commitment)
    assert key.tweak == t == tweak_scalar(P, commitment)
    assert key.output.to_bytes() == oracle.compress(oracle.add(oracle.decompress(P.to_bytes()), oracle.mul(t)))
    assert base_mul(tweak_seckey(sk, commitment)) == key.output


@settings(max_examples=25, deadline=None)
@given(scalars, scalars, st.binary(max_size=32), st.binary(min_size=32, max_size=32))
def test_tweaked_signature_is_valid_for_output_key(sk, k, msg, ckpt):
    """A signature by the internal key whose challenge is bound to Q becomes
    valid for Q once z gets c*tweak added."""
    P = base_mul(sk)
    key = tweak_pubkey(P, ckpt)
    R = base_mul(k)
    c = oracle.h_scalar("CHALLENGE", msg + R.to_bytes() + key.output.to_bytes())
    inner = SchnorrSignature((k + c * sk) % N, R)
    sig = tweak_signature(inner, msg, key)
    assert verify_key_path(key.output, msg, sig)
    assert oracle.schnorr_holds(key.output.to_bytes(), msg, R.to_bytes(), sig.z, tag="CHALLENGE")
    assert not verify_key_path(P, msg, sig)


@settings(max_examples=20, deadline=None)
@given(scalars, scalars, st.binary(max_size=32))
def test_single_party_key_path(sk, nonce, msg):
    key = tweak_pubkey(base_mul(sk), b"c")
    sig = sign_key_path(tweak_seckey(sk, b"c"), msg, nonce)
    assert verify_key_path(key.output, msg, sig)
    assert not verify_key_path(key.output, msg + b"x", sig)


def test_commitment_changes_output():
    P = base_mul(11)
    assert tweak_pubkey(P, b"a").output != tweak_pubkey(P, b"b").output
    assert tweak_pubkey(P).commitment == b""


def test_identity_internal_key_rejected():
    with pytest.raises(ValueError):
        tweak_pubkey(INFINITY, b"")


def test_key_path_uses_challenge_tag():
    sig = sign_key_path(7, b"m", 3)
    assert oracle.schnorr_holds(base_mul(7).to_bytes(), b"m", sig.R.to_bytes(), sig.z, tag=Tag.CHALLENGE.value)
