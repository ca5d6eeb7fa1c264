"""FROST threshold Schnorr signing with preprocessed nonces.

The challenge is computed over the *tweaked* output key Q, so an aggregated
signature (z, R) satisfies zG = R + H(m||R||Q)Y for the untweaked group key
Y; the taproot module adds the tweak correction afterwards.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Union

from .codec import Reader, Writer
from .curve import N, Point, base_mul, point_sum
from .schnorr import SchnorrSignature, Tag, challenge, hash_to_scalar, random_scalar


class FrostError(Exception):
    pass


class NonceReuseError(FrostError):
    pass


class SignerParameterError(FrostError, ValueError):
    pass


@dataclass
class NoncePair:
    d: Optional[int]
    e: Optional[int]
    D: Point
    E: Point
    used: bool = False

    def consume(self) -> tuple[int, int]:
        """Hand out the secrets exactly once, erasing them."""
        if self.used or self.d is None or self.e is None:
            raise NonceReuseError("nonce pair already used")
        d, e = self.d, self.e
        self.used = True
        self.d = self.e = None
        return d, e


@dataclass
class CommitmentList:
    owner: int
    entries: tuple[tuple[Point, Point], ...]
    cursor: int = 0

    def remaining(self) -> int:
        return len(self.entries) - self.cursor

    def take(self) -> tuple[int, Point, Point]:
        """Next unused (position, D, E); the cursor only moves forward."""
        if self.cursor >= len(self.entries):
            raise FrostError(f"commitment list of {self.owner} exhausted")
        pos = self.cursor
        self.cursor += 1
        D, E = self.entries[pos]
        return pos, D, E


def preprocess(owner: int, count: int, rng: Optional[random.Random] = None) -> tuple[CommitmentList, list[NoncePair]]:
    if count < 1:
        raise SignerParameterError("need at least one nonce pair")
    pairs = []
    for _ in range(count):
        d, e = random_scalar(rng), random_scalar(rng)
        pairs.append(NoncePair(d, e, base_mul(d), base_mul(e)))
    return CommitmentList(owner, tuple((p.D, p.E) for p in pairs)), pairs


def signer_order(members: Iterable, beacon: int) -> list:
    """Members sorted by H(id || beacon); ties cannot occur in practice."""
    beacon_bytes = beacon.to_bytes(32, "big")

    def key(member):
        return hash_to_scalar(Tag.BEACON_SELECT, str(member).encode() + b"\x00" + beacon_bytes)

    return sorted(members, key=key)


def select_signers(members: Iterable, beacon: int, count: int) -> tuple:
    members = list(members)
    if len(set(members)) != len(members):
        raise SignerParameterError("duplicate member ids")
    if not 0 < count <= len(members):
        raise SignerParameterError(f"cannot pick {count} signers from {len(members)} members")
    return tuple(sorted(signer_order(members, beacon)[:count]))


def _encode_commitments(B) -> bytes:
    w = Writer().u32(len(B))
    for i, D, E in B:
        w.u32(i).point(D).point(E)
    return w.getvalue()


def binding_value(index: int, message: bytes, B) -> int:
    data = Writer().u32(index).blob(message).raw(_encode_commitments(B)).getvalue()
    return hash_to_scalar(Tag.BINDING, data)


def lagrange_coefficient(S: Iterable[int], i: int) -> int:
    S = list(S)
    if len(set(S)) != len(S):
        raise SignerParameterError("duplicate indices in signer set")
    if i not in S or any(j <= 0 for j in S):
        raise SignerParameterError("index not in signer set or non-positive")
    num, den = 1, 1
    for j in S:
        if j != i:
            num = num * j % N
            den = den * (j - i) % N
    return num * pow(den, -1, N) % N


@dataclass(frozen=True)
class Abort:
    cheaters: frozenset
    # proof of misbehaviour: index -> (z_i*G, R_i + c*lambda_i*Y_i); None when
    # the partial never arrived
    proofs: dict = field(default_factory=dict)


class Round(enum.Enum):
    COLLECTING = "collecting"
    DONE = "done"
    ABORTED = "aborted"


class SigningSession:
    """Public state of one signing attempt, identical for every honest party.

    ``commitments`` is B: (index, D, E) for each signer in ascending index
    order.
    """

    def __init__(self, message: bytes, commitments, group_key: Point, tweaked_key: Point):
        B = tuple(sorted((int(i), D, E) for i, D, E in commitments))
        if len({i for i, _, _ in B}) != len(B):
            raise SignerParameterError("duplicate signer in commitment list")
        self.message = bytes(message)
        self.commitments = B
        self.signer_set = tuple(i for i, _, _ in B)
        self.group_key = group_key
        self.tweaked_key = tweaked_key
        self.partials: dict[int, int] = {}
        self.cheaters: set[int] = set()
        self.round = Round.COLLECTING

    @cached_property
    def binding_values(self) -> dict[int, int]:
        return {i: binding_value(i, self.message, self.commitments) for i in self.signer_set}

    @cached_property
    def commitment_shares(self) -> dict[int, Point]:
        rho = self.binding_values
        return {i: D + E * rho[i] for i, D, E in self.commitments}

    @cached_property
    def group_commitment(self) -> Point:
        return point_sum(self.commitment_shares[i] for i in self.signer_set)

    @cached_property
    def challenge(self) -> int:
        return challenge(Tag.CHALLENGE, self.message, self.group_commitment, self.tweaked_key)

    def lagrange(self, i: int) -> int:
        return lagrange_coefficient(self.signer_set, i)

    def transcript(self) -> tuple:
        """Everything every honest party must agree on."""
        return (self.signer_set, self.commitments, self.binding_values, self.group_commitment, self.challenge)

    def add_partial(self, index: int, z: int) -> None:
        if index in self.signer_set:
            self.partials.setdefault(index, z % N)


def partial_sign(session: SigningSession, index: int, nonce: NoncePair, share: int) -> int:
    if index not in session.signer_set:
        raise SignerParameterError(f"{index} is not in the signer set")
    entry = next(c for c in session.commitments if c[0] == index)
    if (nonce.D, nonce.E) != (entry[1], entry[2]):
        raise SignerParameterError("nonce pair does not match the published commitment")
    rho = session.binding_values[index]
    lam = session.lagrange(index)
    c = session.challenge
    d, e = nonce.consume()
    return (d + e * rho + lam * share * c) % N


def verify_partial(index: int, z: int, session: SigningSession, verification_share: Point) -> bool:
    lhs, rhs = _partial_sides(index, z, session, verification_share)
    return lhs == rhs


def _partial_sides(index, z, session, verification_share):
    weight = session.challenge * session.lagrange(index) % N
    return base_mul(z), session.commitment_shares[index] + verification_share * weight


def aggregate(session: SigningSession, verification_shares) -> Union[SchnorrSignature, Abort]:
    """Combine the partials, or name every signer whose partial is missing
    or fails verification. ``verification_shares`` maps index -> Y_i."""
    proofs = {}
    for i in session.signer_set:
        if i not in session.partials:
            proofs[i] = None
            continue
        lhs, rhs = _partial_sides(i, session.partials[i], session, verification_shares[i])
        if lhs != rhs:
            proofs[i] = (lhs, rhs)
    if proofs:
        session.cheaters |= set(proofs)
        session.round = Round.ABORTED
        return Abort(frozenset(proofs), proofs)
    session.round = Round.DONE
    z = sum(session.partials.values()) % N
    return SchnorrSignature(z, session.group_commitment)


def verify_group_signature(sig: SchnorrSignature, message: bytes, group_key: Point, tweaked_key: Point) -> bool:
    """zG == R + H2(m||R||Q)*Y, the untweaked FROST output relation."""
    c = challenge(Tag.CHALLENGE, message, sig.R, tweaked_key)
    return base_mul(sig.z) == sig.R + group_key * c


# -- broadcast messages ----------------------------------------------------


@dataclass(frozen=True)
class PreProcess:
    index: int
    entries: tuple[tuple[Point, Point], ...]

    def encode(self) -> bytes:
        w = Writer().u32(self.index).u32(len(self.entries))
        for D, E in self.entries:
            w.point(D).point(E)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "PreProcess":
        r = Reader(data)
        index = r.u32()
        entries = tuple((r.point(), r.point()) for _ in range(r.u32()))
        r.done()
        return cls(index, entries)


@dataclass(frozen=True)
class PartialSig:
    index: int
    z: int

    def encode(self) -> bytes:
        return Writer().u32(self.index).scalar(self.z).getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "PartialSig":
        r = Reader(data)
        msg = cls(r.u32(), r.scalar())
        r.done()
        return msg


@dataclass(frozen=True)
class RestartSigning:
    cheaters: tuple[int, ...]

    def encode(self) -> bytes:
        w = Writer().u32(len(self.cheaters))
        for i in self.cheaters:
            w.u32(i)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "RestartSigning":
        r = Reader(data)
        cheaters = tuple(r.u32() for _ in range(r.u32()))
        r.done()
        return cls(cheaters)


@dataclass(frozen=True)
class FinalSig:
    txid: bytes
    z: int
    R: Point

    def encode(self) -> bytes:
        return Writer().raw(self.txid).scalar(self.z).point(self.R).getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "FinalSig":
        r = Reader(data)
        msg = cls(r.raw(32), r.scalar(), r.point())
        r.done()
        return msg
