"""DKG and threshold-signing rounds driven over the PoS broadcast log.

Participants are addressed by protocol index (1-based position in the sorted
member list). Timeouts are counted in PoS blocks. Scripted faults let a test
or scenario make chosen participants misbehave.
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .curve import N, Point
from .dkg import (
    MISSING,
    ComplaintAnswer,
    ComplaintVector,
    DealBroadcast,
    DkgError,
    DkgResult,
    DkgSession,
)
from .frost import (
    Abort,
    CommitmentList,
    FrostError,
    NoncePair,
    PartialSig,
    PreProcess,
    RestartSigning,
    SigningSession,
    aggregate,
    partial_sign,
    preprocess,
    signer_order,
)
from .pos import PosChain, PosMessage
from .schnorr import SchnorrSignature, derive_rng

DKG_FAULTS = ("abort", "bad-share", "false-complaint", "bad-answer")
SIGN_FAULTS = ("withhold", "bad-partial")


class LivenessFailure(FrostError):
    """Not enough non-cheating signers left to reach the threshold."""


class Clock:
    """Advances the PoS chain and, when attached, the ledger in lockstep."""

    def __init__(self, pos: PosChain, ledger=None):
        self.pos = pos
        self.ledger = ledger

    @property
    def height(self) -> int:
        return self.pos.height

    def tick(self) -> None:
        self.pos.mine_block()
        if self.ledger is not None:
            self.ledger.mine_block()

    def wait_for(self, done: Callable[[], bool], timeout: int) -> bool:
        """Mine until ``done()`` or ``timeout`` blocks pass. True if done."""
        deadline = self.height + timeout
        while self.height < deadline:
            self.tick()
            if done():
                return True
        return done()


@dataclass(frozen=True)
class Fault:
    kind: str
    targets: tuple[int, ...] = ()


# -- DKG --------------------------------------------------------------------


@dataclass
class DkgOutcome:
    results: dict  # index -> DkgResult, every participant that finished
    honest: tuple[int, ...]
    misbehaving: tuple[int, ...]
    complaints: dict  # complainer -> accused dealers
    rehabilitated: tuple[int, ...]
    counts: Counter
    started_at: int
    finished_at: int

    @property
    def reference(self) -> DkgResult:
        return self.results[self.honest[0]]

    @property
    def group_pubkey(self) -> Point:
        return self.reference.group_pubkey

    @property
    def qualified(self) -> tuple[int, ...]:
        return self.reference.qualified


def dkg_message_count(n: int, complaint_senders: int, answers: int = 0, dealers: Optional[int] = None) -> dict:
    """Messages of one DKG run: every live dealer sends n private shares
    (itself included) and one commitment broadcast; every live participant
    broadcasts one complaint vector; plus one answer per complaint."""
    dealers = n if dealers is None else dealers
    return {"deal-private": dealers * n, "deal-broadcast": dealers, "complaint": complaint_senders, "answer": answers}


def run_dkg(
    clock: Clock,
    ids: Sequence[str],
    t: int,
    session: str,
    seed,
    faults: Optional[dict] = None,
    phase_timeout: int = 3,
) -> DkgOutcome:
    faults = dict(faults or {})
    n = len(ids)
    pos = clock.pos
    start = pos.height
    counts: Counter = Counter()
    sessions = {
        i: DkgSession(n, t, i, derive_rng(seed, session, "dkg", i))
        for i in range(1, n + 1)
        if faults.get(i, Fault("")).kind != "abort"
    }
    honest = tuple(i for i in sessions if i not in faults)
    if not honest:
        raise DkgError("no honest participant to run the key generation")

    def post(kind: str, index: int, body: bytes) -> None:
        pos.broadcast(PosMessage(kind, ids[index - 1], session, body))
        counts[kind.split("/")[1]] += 1

    def on_chain(kind: str):
        for _, msg in pos.messages(kind, session, since=start + 1):
            if msg.sender in ids:
                yield ids.index(msg.sender) + 1, msg.body

    # dealing
    inbox: dict = {i: [] for i in range(1, n + 1)}
    for i, s in sessions.items():
        broadcast, private = s.deal()
        fault = faults.get(i)
        if fault is not None and fault.kind == "bad-share":
            private = [
                dataclasses.replace(p, share=(p.share + 1) % N) if p.recipient in fault.targets else p for p in private
            ]
        post("dkg/deal-broadcast", i, broadcast.encode())
        for p in private:
            inbox[p.recipient].append(p)
            counts["deal-private"] += 1
    clock.wait_for(lambda: len({i for i, _ in on_chain("dkg/deal-broadcast")}) == n, phase_timeout)
    dealt = []
    for sender, body in on_chain("dkg/deal-broadcast"):
        msg = DealBroadcast.decode(body)
        if msg.dealer == sender:
            dealt.append(msg)
    for i, s in sessions.items():
        for msg in dealt:
            s.receive_commitments(msg)
        for p in inbox[i]:
            s.receive_private(p)
        s.close_dealing()
    dealers = {m.dealer for m in dealt}

    # complaints
    for i, s in sessions.items():
        vector = s.file_complaints()
        fault = faults.get(i)
        if fault is not None and fault.kind == "false-complaint":
            verdicts = list(vector.verdicts)
            for j in fault.targets:
                verdicts[j - 1] = MISSING
            vector = ComplaintVector(i, tuple(verdicts))
        post("dkg/complaint", i, vector.encode())
    clock.wait_for(lambda: {i for i, _ in on_chain("dkg/complaint")} >= dealers, phase_timeout)
    vectors = []
    for sender, body in on_chain("dkg/complaint"):
        vector = ComplaintVector.decode(body)
        if vector.sender == sender:
            vectors.append(vector)
    complaints = {v.sender: tuple(v.accused()) for v in vectors if v.accused()}
    for i, s in sessions.items():
        for vector in vectors:
            answers = s.receive_complaints(vector)
            for answer in answers or ():
                fault = faults.get(i)
                # a bad-share dealer sticks to its lie when challenged
                lying = fault is not None and (
                    fault.kind == "bad-answer" or (fault.kind == "bad-share" and answer.complainer in fault.targets)
                )
                if lying:
                    answer = ComplaintAnswer(answer.dealer, answer.complainer, (answer.share + 1) % N)
                post("dkg/answer", i, answer.encode())

    # answers; only waited for when someone complained
    wanted = {(d, v.sender) for v in vectors for d in v.accused() if d in dealers}
    if wanted:
        def answered():
            got = set()
            for sender, body in on_chain("dkg/answer"):
                a = ComplaintAnswer.decode(body)
                if a.dealer == sender:
                    got.add((a.dealer, a.complainer))
            return got >= wanted

        clock.wait_for(answered, phase_timeout)
    for sender, body in on_chain("dkg/answer"):
        answer = ComplaintAnswer.decode(body)
        if answer.dealer != sender:
            continue
        for s in sessions.values():
            s.receive_answer(answer)

    results = {i: s.finalize() for i, s in sessions.items()}
    views = {(results[i].group_pubkey, results[i].qualified) for i in honest}
    if len(views) != 1:
        raise DkgError("honest participants disagree on the key or the qualified set")
    misbehaving = tuple(sorted(sessions[honest[0]].misbehaving))
    accused = {d for ds in complaints.values() for d in ds}
    return DkgOutcome(
        results=results,
        honest=honest,
        misbehaving=misbehaving,
        complaints=complaints,
        rehabilitated=tuple(sorted(accused - set(misbehaving))),
        counts=counts,
        started_at=start,
        finished_at=pos.height,
    )


# -- signing ----------------------------------------------------------------


@dataclass
class SigningGroup:
    """Key material and nonce boards of one configuration's signers."""

    ids: tuple[str, ...]
    threshold: int
    group_key: Point
    qualified: tuple[int, ...]
    shares: dict  # index -> secret share (held by that participant only)
    verification_shares: dict  # index -> Y_i
    session: str
    seed: object
    preprocess_count: int = 8
    boards: dict = field(default_factory=dict)
    nonces: dict = field(default_factory=dict)
    batches: Counter = field(default_factory=Counter)

    @classmethod
    def from_dkg(cls, ids, threshold: int, outcome: DkgOutcome, session: str, seed, preprocess_count: int = 8) -> "SigningGroup":
        ref = outcome.reference
        qualified = tuple(i for i in ref.qualified if i in outcome.results)
        return cls(
            ids=tuple(ids),
            threshold=threshold,
            group_key=ref.group_pubkey,
            qualified=qualified,
            shares={i: outcome.results[i].my_share for i in qualified},
            verification_shares={i: ref.verification_share(i) for i in qualified},
            session=session,
            seed=seed,
            preprocess_count=preprocess_count,
        )

    def publish_nonces(self, clock: Clock, members: Optional[Sequence[int]] = None, counts: Optional[Counter] = None) -> None:
        """Each member samples a batch of nonce pairs and broadcasts the
        public halves; boards are read back from the chain."""
        members = self.qualified if members is None else tuple(members)
        if not members:
            return
        start = clock.height
        for i in members:
            batch = self.batches[i]
            self.batches[i] += 1
            rng = derive_rng(self.seed, self.session, "nonces", i, batch)
            board, secrets = preprocess(i, self.preprocess_count, rng)
            clock.pos.broadcast(PosMessage("frost/preprocess", self.ids[i - 1], self.session, PreProcess(i, board.entries).encode()))
            self.nonces.setdefault(i, []).append(secrets)
            if counts is not None:
                counts[("preprocess", i)] += 1
        pending = set(members)

        def landed():
            for _, msg in clock.pos.messages("frost/preprocess", self.session, since=start + 1):
                body = PreProcess.decode(msg.body)
                if body.index in pending and self.ids[body.index - 1] == msg.sender:
                    self.boards[body.index] = CommitmentList(body.index, body.entries)
                    pending.discard(body.index)
            return not pending

        clock.wait_for(landed, clock.pos.delta)

    def take_nonce(self, index: int) -> tuple[Point, Point, NoncePair]:
        pos, D, E = self.boards[index].take()
        return D, E, self.nonces[index][-1][pos]


@dataclass
class SigningOutcome:
    signature: SchnorrSignature
    rounds: int
    attempts: list  # signer set of each attempt
    cheaters: tuple[int, ...]
    counts: Counter  # (kind, index) -> messages
    finished_at: int

    def broadcasts_by(self, index: int) -> int:
        return sum(v for (kind, i), v in self.counts.items() if i == index)


def run_signing(
    clock: Clock,
    group: SigningGroup,
    message: bytes,
    tweaked_key: Point,
    beacon: int,
    session: str,
    faults: Optional[dict] = None,
    timeout: int = 10,
    counts: Optional[Counter] = None,
) -> SigningOutcome:
    faults = dict(faults or {})
    counts = Counter() if counts is None else counts
    pos = clock.pos
    t = group.threshold
    honest = [i for i in group.qualified if i not in faults]
    order = signer_order(group.qualified, beacon)
    if len(order) < t:
        raise LivenessFailure(f"only {len(order)} qualified signers for threshold {t}")
    S = sorted(order[:t])
    used = set(S)
    attempts, named = [], []
    while True:
        attempts.append(tuple(S))
        attempt = f"{session}/{len(attempts)}"
        empty = [i for i in S if group.boards.get(i) is None or group.boards[i].remaining() == 0]
        group.publish_nonces(clock, empty, counts)
        B, secrets = [], {}
        for i in S:
            D, E, nonce = group.take_nonce(i)
            B.append((i, D, E))
            secrets[i] = nonce
        start = pos.height
        for i in S:
            fault = faults.get(i)
            if fault is not None and fault.kind == "withhold":
                continue
            local = SigningSession(message, B, group.group_key, tweaked_key)
            z = partial_sign(local, i, secrets[i], group.shares[i])
            if fault is not None and fault.kind == "bad-partial":
                z += 1
            pos.broadcast(PosMessage("frost/partial", group.ids[i - 1], attempt, PartialSig(i, z % N).encode()))
            counts[("partial", i)] += 1

        def partials():
            got = {}
            for _, msg in pos.messages("frost/partial", attempt, since=start + 1):
                body = PartialSig.decode(msg.body)
                if body.index in S and group.ids[body.index - 1] == msg.sender:
                    got.setdefault(body.index, body.z)
            return got

        clock.wait_for(lambda: set(partials()) >= set(S), timeout)
        received = partials()
        outcomes, transcripts = set(), set()
        for _ in honest:
            # every honest party aggregates from its own copy of the log
            view = SigningSession(message, B, group.group_key, tweaked_key)
            for i, z in received.items():
                view.add_partial(i, z)
            result = aggregate(view, group.verification_shares)
            outcomes.add(result.cheaters if isinstance(result, Abort) else result)
            transcripts.add(repr(view.transcript()))
        if len(outcomes) != 1 or len(transcripts) != 1:
            raise FrostError("honest parties disagree on the signing outcome")
        result = outcomes.pop()
        if isinstance(result, SchnorrSignature):
            return SigningOutcome(result, len(attempts), attempts, tuple(named), counts, pos.height)
        cheaters = sorted(result)
        named.extend(cheaters)
        reporter = honest[0] if honest else S[0]
        pos.broadcast(PosMessage("frost/restart", group.ids[reporter - 1], attempt, RestartSigning(tuple(cheaters)).encode()))
        counts[("restart", reporter)] += 1
        S = [i for i in S if i not in result]
        fresh = [j for j in order if j not in used][: len(cheaters)]
        used.update(fresh)
        S = sorted(S + fresh)
        if len(S) < t:
            raise LivenessFailure(f"{len(S)} signers left after excluding {named}, need {t}")
