"""Joint-Feldman distributed key generation with complaints.

Every participant deals a Feldman sharing of a random secret. Recipients check
their shares against the broadcast coefficient commitments and complain about
bad or missing shares; an accused dealer clears itself by publishing the share
in the open. Dealers with an unresolved complaint, or who never broadcast
commitments, are excluded from the qualified set.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from typing import Optional

from .codec import Reader, Writer
from .curve import N, Point, base_mul, eval_commitments, point_sum
from .schnorr import random_scalar


class DkgError(Exception):
    pass


class DkgParameterError(DkgError, ValueError):
    pass


class UnrecoverableSessionError(DkgError):
    """Fewer than t dealers qualified; the key generation must restart."""


def _check_params(t: int, n: int) -> None:
    if not 1 <= t <= n:
        raise DkgParameterError(f"need 1 <= t <= n, got t={t}, n={n}")


def default_threshold(n: int) -> int:
    return n // 2 + 1


@dataclass(frozen=True)
class DealerOutput:
    coefficients: tuple[int, ...]
    commitments: tuple[Point, ...]
    shares: tuple[int, ...]  # shares[j - 1] goes to participant j

    def share_for(self, index: int) -> int:
        return self.shares[index - 1]


def eval_poly(coefficients, x: int) -> int:
    acc = 0
    for a in reversed(coefficients):
        acc = (acc * x + a) % N
    return acc


def deal(t: int, n: int, rng: Optional[random.Random] = None, secret: Optional[int] = None) -> DealerOutput:
    _check_params(t, n)
    coefficients = [random_scalar(rng) if secret is None else secret]
    coefficients += [random_scalar(rng) for _ in range(t - 1)]
    return DealerOutput(
        coefficients=tuple(coefficients),
        commitments=tuple(base_mul(a) for a in coefficients),
        shares=tuple(eval_poly(coefficients, j) for j in range(1, n + 1)),
    )


def verify_share(dealer: int, index: int, share: int, commitments, t: Optional[int] = None) -> bool:
    """share*G == sum_k index^k A_k for the dealer's commitments."""
    if t is not None and len(commitments) != t:
        raise DkgParameterError(f"dealer {dealer} sent {len(commitments)} commitments, expected {t}")
    if not commitments:
        raise DkgParameterError("empty commitment list")
    if not 0 <= share < N:
        return False
    return base_mul(share) == eval_commitments(index, commitments)


def answer_complaint(dealer: DealerOutput, complainer: int) -> int:
    return dealer.share_for(complainer)


# -- wire messages ---------------------------------------------------------


class _Kind(enum.IntEnum):
    DEAL_BROADCAST = 1
    DEAL_PRIVATE = 2
    COMPLAINT_VECTOR = 3
    COMPLAINT_ANSWER = 4


def _frame(kind: _Kind, body: bytes) -> bytes:
    return Writer().u8(kind).blob(body).getvalue()


def _unframe(data: bytes, kind: _Kind) -> Reader:
    r = Reader(data)
    got = r.u8()
    if got != kind:
        raise ValueError(f"expected message kind {kind}, got {got}")
    body = r.blob()
    r.done()
    return Reader(body)


@dataclass(frozen=True)
class DealBroadcast:
    dealer: int
    commitments: tuple[Point, ...]

    def encode(self) -> bytes:
        w = Writer().u32(self.dealer).u32(len(self.commitments))
        for A in self.commitments:
            w.point(A)
        return _frame(_Kind.DEAL_BROADCAST, w.getvalue())

    @classmethod
    def decode(cls, data: bytes) -> "DealBroadcast":
        r = _unframe(data, _Kind.DEAL_BROADCAST)
        dealer = r.u32()
        commitments = tuple(r.point() for _ in range(r.u32()))
        r.done()
        return cls(dealer, commitments)


@dataclass(frozen=True)
class DealPrivate:
    dealer: int
    recipient: int
    share: int

    def encode(self) -> bytes:
        body = Writer().u32(self.dealer).u32(self.recipient).scalar(self.share).getvalue()
        return _frame(_Kind.DEAL_PRIVATE, body)

    @classmethod
    def decode(cls, data: bytes) -> "DealPrivate":
        r = _unframe(data, _Kind.DEAL_PRIVATE)
        msg = cls(r.u32(), r.u32(), r.scalar())
        r.done()
        return msg


# A verdict is None (no complaint) or the offending share (MISSING when the
# dealer never sent one).
MISSING = -1


@dataclass(frozen=True)
class ComplaintVector:
    sender: int
    verdicts: tuple[Optional[int], ...]  # verdicts[j - 1] concerns dealer j

    def accused(self) -> list[int]:
        return [j for j, v in enumerate(self.verdicts, start=1) if v is not None]

    def encode(self) -> bytes:
        w = Writer().u32(self.sender).u32(len(self.verdicts))
        for v in self.verdicts:
            if v is None:
                w.u8(0).scalar(0)
            elif v == MISSING:
                w.u8(2).scalar(0)
            else:
                w.u8(1).scalar(v)
        return _frame(_Kind.COMPLAINT_VECTOR, w.getvalue())

    @classmethod
    def decode(cls, data: bytes) -> "ComplaintVector":
        r = _unframe(data, _Kind.COMPLAINT_VECTOR)
        sender = r.u32()
        verdicts = []
        for _ in range(r.u32()):
            flag, value = r.u8(), r.scalar()
            if flag not in (0, 1, 2):
                raise ValueError(f"bad verdict flag {flag}")
            verdicts.append(None if flag == 0 else (value if flag == 1 else MISSING))
        r.done()
        return cls(sender, tuple(verdicts))


@dataclass(frozen=True)
class ComplaintAnswer:
    dealer: int
    complainer: int
    share: int

    def encode(self) -> bytes:
        body = Writer().u32(self.dealer).u32(self.complainer).scalar(self.share).getvalue()
        return _frame(_Kind.COMPLAINT_ANSWER, body)

    @classmethod
    def decode(cls, data: bytes) -> "ComplaintAnswer":
        r = _unframe(data, _Kind.COMPLAINT_ANSWER)
        msg = cls(r.u32(), r.u32(), r.scalar())
        r.done()
        return msg


def decode_message(data: bytes):
    kinds = {
        _Kind.DEAL_BROADCAST: DealBroadcast,
        _Kind.DEAL_PRIVATE: DealPrivate,
        _Kind.COMPLAINT_VECTOR: ComplaintVector,
        _Kind.COMPLAINT_ANSWER: ComplaintAnswer,
    }
    if not data or data[0] not in kinds:
        raise ValueError("unknown DKG message kind")
    return kinds[_Kind(data[0])].decode(data)


# -- per-participant state machine ----------------------------------------


class Phase(enum.IntEnum):
    DEALING = 0
    COMPLAINING = 1
    ANSWERING = 2
    DONE = 3


@dataclass(frozen=True)
class DkgResult:
    group_pubkey: Point
    my_share: int
    commitments: dict  # dealer -> tuple of commitments, qualified dealers only
    qualified: tuple[int, ...]
    group_commitments: tuple[Point, ...]

    def verification_share(self, index: int) -> Point:
        """Public key of participant ``index``'s share."""
        return eval_commitments(index, self.group_commitments)


@dataclass
class DkgSession:
    n: int
    t: int
    my_index: int
    rng: Optional[random.Random] = None
    phase: Phase = Phase.DEALING
    received_shares: dict = field(default_factory=dict)
    received_commitments: dict = field(default_factory=dict)
    dealer_output: Optional[DealerOutput] = None
    # (dealer, complainer) pairs that have not been cleared by a valid answer
    open_complaints: set = field(default_factory=set)
    complaint_senders: set = field(default_factory=set)

    def __post_init__(self):
        _check_params(self.t, self.n)
        if not 1 <= self.my_index <= self.n:
            raise DkgParameterError(f"index {self.my_index} outside 1..{self.n}")

    def _require(self, *phases: Phase) -> None:
        if self.phase not in phases:
            raise DkgError(f"operation not allowed in phase {self.phase.name}")

    @property
    def misbehaving(self) -> set[int]:
        silent = {j for j in range(1, self.n + 1) if j not in self.received_commitments}
        return silent | {dealer for dealer, _ in self.open_complaints}

    @property
    def qualified(self) -> tuple[int, ...]:
        bad = self.misbehaving
        return tuple(j for j in range(1, self.n + 1) if j not in bad)

    def deal(self) -> tuple[DealBroadcast, list[DealPrivate]]:
        self._require(Phase.DEALING)
        if self.dealer_output is None:
            self.dealer_output = deal(self.t, self.n, self.rng)
        out = self.dealer_output
        private = [DealPrivate(self.my_index, j, out.share_for(j)) for j in range(1, self.n + 1)]
        return DealBroadcast(self.my_index, out.commitments), private

    def receive_private(self, msg: DealPrivate) -> None:
        self._require(Phase.DEALING)
        if msg.recipient != self.my_index or not 1 <= msg.dealer <= self.n:
            return
        self.received_shares.setdefault(msg.dealer, msg.share)

    def receive_commitments(self, msg: DealBroadcast) -> None:
        self._require(Phase.DEALING)
        # a malformed commitment list counts as no broadcast at all
        if not 1 <= msg.dealer <= self.n or len(msg.commitments) != self.t:
            return
        self.received_commitments.setdefault(msg.dealer, tuple(msg.commitments))

    def close_dealing(self) -> None:
        """Dealing timeout fired: whatever has not arrived is missing."""
        self._require(Phase.DEALING)
        self.phase = Phase.COMPLAINING

    def file_complaints(self) -> ComplaintVector:
        self._require(Phase.COMPLAINING)
        verdicts: list[Optional[int]] = []
        for j in range(1, self.n + 1):
            commitments = self.received_commitments.get(j)
            share = self.received_shares.get(j)
            if commitments is None:
                # already excluded through the broadcast channel
                verdicts.append(None)
            elif share is None:
                verdicts.append(MISSING)
            elif not verify_share(j, self.my_index, share, commitments, self.t):
                verdicts.append(share)
            else:
                verdicts.append(None)
        self.phase = Phase.ANSWERING
        return ComplaintVector(self.my_index, tuple(verdicts))

    def receive_complaints(self, vector: ComplaintVector) -> Optional[list[ComplaintAnswer]]:
        """Record a complaint vector; returns this dealer's answers when it
        is among the accused."""
        self._require(Phase.ANSWERING)
        if vector.sender in self.complaint_senders or len(vector.verdicts) != self.n:
            return None
        self.complaint_senders.add(vector.sender)
        for dealer in vector.accused():
            self.open_complaints.add((dealer, vector.sender))
        if vector.verdicts[self.my_index - 1] is not None and self.dealer_output is not None:
            return [ComplaintAnswer(self.my_index, vector.sender, answer_complaint(self.dealer_output, vector.sender))]
        return None

    def receive_answer(self, answer: ComplaintAnswer) -> bool:
        self._require(Phase.ANSWERING)
        key = (answer.dealer, answer.complainer)
        commitments = self.received_commitments.get(answer.dealer)
        if key not in self.open_complaints or commitments is None:
            return False
        if not verify_share(answer.dealer, answer.complainer, answer.share, commitments, self.t):
            return False
        self.open_complaints.discard(key)
        if answer.complainer == self.my_index:
            self.received_shares[answer.dealer] = answer.share
        return True

    def finalize(self) -> DkgResult:
        self._require(Phase.ANSWERING, Phase.DONE)
        qualified = self.qualified
        if len(qualified) < self.t:
            raise UnrecoverableSessionError(f"only {len(qualified)} qualified dealers, need {self.t}")
        missing_share = [j for j in qualified if j not in self.received_shares]
        if missing_share:
            # cannot happen for an honest participant: a missing share is a
            # complaint, and answered complaints hand over the share
            raise DkgError(f"no valid share from qualified dealers {missing_share}")
        self.phase = Phase.DONE
        commitments = {j: self.received_commitments[j] for j in qualified}
        group_commitments = tuple(point_sum(commitments[j][k] for j in qualified) for k in range(self.t))
        return DkgResult(
            group_pubkey=group_commitments[0],
            my_share=sum(self.received_shares[j] for j in qualified) % N,
            commitments=commitments,
            qualified=qualified,
            group_commitments=group_commitments,
        )


def interpolate_at_zero(shares: dict) -> int:
    """Recover f(0) from {index: f(index)}; needs at least t points. The
    protocol never calls this; it models what leaked shares give away."""
    xs = list(shares)
    secret = 0
    for i in xs:
        num, den = 1, 1
        for j in xs:
            if j != i:
                num = num * j % N
                den = den * (j - i) % N
        secret = (secret + shares[i] * num * pow(den, -1, N)) % N
    return secret
