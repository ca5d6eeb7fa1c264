"""Taproot-style key tweaking with a commitment, key-path only."""

from __future__ import annotations

from dataclasses import dataclass

from .curve import N, Point, base_mul
from .schnorr import SchnorrSignature, Tag, challenge, hash_to_scalar, schnorr_sign, schnorr_verify


@dataclass(frozen=True)
class TaprootKey:
    internal: Point
    commitment: bytes
    output: Point
    tweak: int


def tweak_scalar(pk: Point, commitment: bytes) -> int:
    return hash_to_scalar(Tag.TAPTWEAK, pk.to_bytes() + commitment)


def tweak_pubkey(pk: Point, commitment: bytes = b"") -> TaprootKey:
    """Q = pk + H_TapTweak(pk||commitment)G. An empty commitment gives the
    plain internal-key-only tweak."""
    if pk.is_infinity:
        raise ValueError("internal key must not be the identity")
    t = tweak_scalar(pk, commitment)
    return TaprootKey(pk, bytes(commitment), pk + base_mul(t), t)


def tweak_seckey(sk: int, commitment: bytes = b"") -> int:
    return (sk + tweak_scalar(base_mul(sk), commitment)) % N


def tweak_signature(sig: SchnorrSignature, message: bytes, key: TaprootKey) -> SchnorrSignature:
    """Turn a signature valid for the internal key (with challenge bound to
    Q) into one valid for Q: z' = z + H(m||R||Q) * tweak."""
    c = challenge(Tag.CHALLENGE, message, sig.R, key.output)
    return SchnorrSignature((sig.z + c * key.tweak) % N, sig.R)


def verify_key_path(Q: Point, message: bytes, sig) -> bool:
    return schnorr_verify(Q, message, sig, tag=Tag.CHALLENGE)


def sign_key_path(sk: int, message: bytes, nonce: int) -> SchnorrSignature:
    """Single-party key-path spend for an owner holding the full (already
    tweaked, if any) secret."""
    return schnorr_sign(sk, base_mul(sk), message, nonce, tag=Tag.CHALLENGE)
