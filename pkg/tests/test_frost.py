import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracle
from pikachu.curve import N, base_mul
from pikachu.dkg import deal
from pikachu.frost import (
    Abort,
    FrostError,
    NonceReuseError,
    SignerParameterError,
    SigningSession,
    aggregate,
    binding_value,
    lagrange_coefficient,
    partial_sign,
    preprocess,
    select_signers,
    signer_order,
    verify_group_signature,
    verify_partial,
)
from pikachu.taproot import tweak_pubkey, tweak_signature, verify_key_path


def setup(n, t, seed=0, count=2):
    rng = random.Random(seed)
    dealt = deal(t, n, rng)
    Y = dealt.commitments[0]
    shares = {i: dealt.share_for(i) for i in range(1, n + 1)}
    vshares = {i: base_mul(s) for i, s in shares.items()}
    boards, secrets = {}, {}
    for i in range(1, n + 1):
        boards[i], secrets[i] = preprocess(i, count, rng)
    return Y, dealt.coefficients[0], shares, vshares, boards, secrets


def sign(S, message, Y, Q, shares, boards, secrets, corrupt=()):
    B = []
    pairs = {}
    for i in S:
        pos, D, E = boards[i].take()
        B.append((i, D, E))
        pairs[i] = secrets[i][pos]
    session = SigningSession(message, B, Y, Q)
    for i in S:
        z = partial_sign(session, i, pairs[i], shares[i])
        if i in corrupt:
            z = (z + 1) % N
        session.add_partial(i, z)
    return session


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=40), min_size=1, max_size=6, unique=True), st.data())
def test_lagrange_matches_rational_reference(S, data):
    i = data.draw(st.sampled_from(S))
    ref = Fraction(1)
    for j in S:
        if j != i:
            ref *= Fraction(j, j - i)
    assert lagrange_coefficient(S, i) == ref.numerator * pow(ref.denominator, -1, N) % N


def test_lagrange_rejects_bad_sets():
    with pytest.raises(SignerParameterError):
        lagrange_coefficient([1, 1, 2], 1)
    with pytest.raises(SignerParameterError):
        lagrange_coefficient([1, 2], 3)
    with pytest.raises(SignerParameterError):
        lagrange_coefficient([0, 2], 2)


@pytest.mark.parametrize("n,t", [(1, 1), (3, 2), (5, 3), (7, 4)])
def test_threshold_signature_verifies_under_tweaked_key(n, t):
    Y, secret, shares, vshares, boards, secrets = setup(n, t)
    key = tweak_pubkey(Y, b"ckpt")
    S = select_signers(range(1, n + 1), 12345, t)
    session = sign(S, b"tx", Y, key.output, shares, boards, secrets)
    sig = aggregate(session, vshares)
    assert verify_group_signature(sig, b"tx", Y, key.output)
    final = tweak_signature(sig, b"tx", key)
    assert verify_key_path(key.output, b"tx", final)
    assert oracle.schnorr_holds(key.output.to_bytes(), b"tx", final.R.to_bytes(), final.z, tag="CHALLENGE")


def test_any_t_subset_gives_a_valid_signature():
    Y, _, shares, vshares, boards, secrets = setup(5, 3, count=12)
    Q = tweak_pubkey(Y, b"").output
    for S in [(1, 2, 3), (1, 4, 5), (2, 3, 5), (3, 4, 5)]:
        sig = aggregate(sign(S, b"m", Y, Q, shares, boards, secrets), vshares)
        assert verify_group_signature(sig, b"m", Y, Q)


def test_bad_and_missing_partials_are_named():
    Y, _, shares, vshares, boards, secrets = setup(5, 3)
    Q = tweak_pubkey(Y).output
    session = sign((1, 3, 5), b"m", Y, Q, shares, boards, secrets, corrupt=(3,))
    del session.partials[5]
    out = aggregate(session, vshares)
    assert isinstance(out, Abort)
    assert out.cheaters == frozenset({3, 5})
    assert out.proofs[5] is None
    lhs, rhs = out.proofs[3]
    assert lhs != rhs
    assert not verify_partial(3, session.partials[3], session, vshares[3])
    assert verify_partial(1, session.partials[1], session, vshares[1])


def test_nonce_pairs_are_single_use():
    Y, _, shares, vshares, boards, secrets = setup(3, 2, count=1)
    Q = tweak_pubkey(Y).output
    sign((1, 2), b"a", Y, Q, shares, boards, secrets)
    with pytest.raises(NonceReuseError):
        secrets[1][0].consume()
    with pytest.raises(FrostError):
        boards[1].take()


def test_partial_sign_checks_commitment_and_membership():
    Y, _, shares, vshares, boards, secrets = setup(3, 2)
    Q = tweak_pubkey(Y).output
    _, D, E = boards[1].take()
    _, D2, E2 = boards[2].take()
    session = SigningSession(b"m", [(1, D, E), (2, D2, E2)], Y, Q)
    with pytest.raises(SignerParameterError):
        partial_sign(session, 1, secrets[1][1], shares[1])  # wrong pair
    with pytest.raises(SignerParameterError):
        partial_sign(session, 3, secrets[3][0], shares[3])
    with pytest.raises(SignerParameterError):
        SigningSession(b"m", [(1, D, E), (1, D, E)], Y, Q)


def test_binding_values_bind_message_and_commitments():
    boards = {i: preprocess(i, 1, random.Random(i))[0] for i in (1, 2)}
    B = [(i, *boards[i].entries[0]) for i in (1, 2)]
    rho = binding_value(1, b"m", B)
    assert rho != binding_value(1, b"n", B)
    assert rho != binding_value(2, b"m", B)
    assert rho != binding_value(1, b"m", B[:1])


def test_signer_selection_is_a_deterministic_function_of_beacon():
    members = list(range(1, 10))
    assert select_signers(members, 7, 4) == select_signers(list(reversed(members)), 7, 4)
    assert sorted(signer_order(members, 7)) == members
    picks = {select_signers(members, b, 4) for b in range(20)}
    assert len(picks) > 1
    with pytest.raises(SignerParameterError):
        select_signers([1, 1, 2], 0, 2)
    with pytest.raises(SignerParameterError):
        select_signers([1, 2], 0, 3)


def test_preprocess_needs_a_positive_count():
    with pytest.raises(SignerParameterError):
        preprocess(1, 0)
