"""Domain-separated hashing and single-party Schnorr signatures."""

from __future__ import annotations

import enum
import hashlib
import random
import secrets
from dataclasses import dataclass
from typing import Optional

from .codec import DecodeError, scalar_bytes, scalar_from_bytes
from .curve import INFINITY, N, POINT_SIZE, SCALAR_SIZE, InvalidPointError, Point, base_mul, check_linear


class Tag(str, enum.Enum):
    SIG = "SIG"
    BINDING = "BINDING"
    CHALLENGE = "CHALLENGE"
    TAPTWEAK = "TAPTWEAK"
    BEACON = "BEACON"
    BEACON_SELECT = "BEACON-SELECT"
    CID = "CID"
    COMMIT_PK = "COMMIT-PK"


_DOMAIN = b"pikachu/v1/"


def tagged_digest(tag: Tag, data: bytes, size: int = 32) -> bytes:
    return hashlib.shake_256(_DOMAIN + tag.value.encode() + b"\x00" + data).digest(size)


def hash_to_scalar(tag: Tag, data: bytes) -> int:
    """Map ``data`` to [1, q) with a 64-byte digest, so the reduction bias is
    negligible."""
    wide = int.from_bytes(tagged_digest(Tag(tag), data, 64), "big")
    return 1 + wide % (N - 1)


def random_scalar(rng: Optional[random.Random] = None) -> int:
    """A uniform nonzero scalar. Pass a seeded ``random.Random`` for replay."""
    if rng is None:
        return 1 + secrets.randbelow(N - 1)
    return rng.randrange(1, N)


def derive_rng(seed, *labels) -> random.Random:
    """Independent deterministic stream for (seed, labels)."""
    material = repr((seed,) + labels).encode()
    return random.Random(hashlib.sha256(material).digest())


@dataclass(frozen=True)
class SchnorrSignature:
    z: int
    R: Point

    def to_bytes(self) -> bytes:
        return self.R.to_bytes() + scalar_bytes(self.z)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SchnorrSignature":
        if len(data) != POINT_SIZE + SCALAR_SIZE:
            raise DecodeError("bad signature length")
        try:
            R = Point.from_bytes(data[:POINT_SIZE])
        except InvalidPointError as exc:
            raise DecodeError(str(exc)) from exc
        return cls(scalar_from_bytes(data[POINT_SIZE:]), R)


def challenge(tag: Tag, message: bytes, R: Point, key: Point) -> int:
    return hash_to_scalar(tag, message + R.to_bytes() + key.to_bytes())


def schnorr_sign(sk: int, Y: Point, message: bytes, k: int, tag: Tag = Tag.SIG) -> SchnorrSignature:
    if not 0 < sk < N:
        raise ValueError("secret key must be in [1, q)")
    if not 0 < k < N:
        raise ValueError("nonce must be in [1, q)")
    R = base_mul(k)
    c = challenge(tag, message, R, Y)
    return SchnorrSignature((k + c * sk) % N, R)


def schnorr_verify(Y: Point, message: bytes, sig, tag: Tag = Tag.SIG) -> bool:
    """Check zG == R + H(m||R||Y)Y. Accepts a signature object or its 65-byte
    encoding; anything malformed is simply invalid."""
    try:
        if isinstance(sig, (bytes, bytearray)):
            sig = SchnorrSignature.from_bytes(bytes(sig))
        if not isinstance(sig, SchnorrSignature) or not isinstance(Y, Point):
            return False
        if not 0 <= sig.z < N or sig.R == INFINITY or Y == INFINITY:
            return False
        c = challenge(tag, message, sig.R, Y)
    except (ValueError, TypeError):
        return False
    return check_linear(sig.z, sig.R, c, Y)
