"""Checkpointing orchestration: key generation on every reconfiguration,
threshold-signed checkpoint transactions, and the initial funding protocol."""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from typing import Optional

from .curve import Point, base_mul
from .frost import FinalSig
from .ledger import LedgerTx, OutPoint, SimChain, TxOutput
from .pos import ConfigPayload, Configuration, ContentStore, PosMessage
from .rounds import Clock, DkgOutcome, Fault, SigningGroup, run_dkg, run_signing
from .schnorr import Tag, derive_rng, random_scalar, tagged_digest
from .taproot import TaprootKey, sign_key_path, tweak_pubkey, tweak_signature, verify_key_path


class ProtocolError(Exception):
    pass


class ParameterError(ProtocolError, ValueError):
    pass


class ProtocolViolation(ProtocolError):
    """A protocol-level invariant failed during a run."""


class FundingExhausted(ProtocolError):
    pass


@dataclass(frozen=True)
class ProtocolParams:
    u: int = 2  # churn that triggers a reconfiguration
    b: int = 2  # bound on consecutive configuration difference
    f: Fraction = Fraction(1, 3)  # adversarial fraction
    L: int = 2  # configurations before old keys count as leaked
    y_wait: int = 20  # PoS blocks allotted to key generation
    h0: int = 12  # ledger height closing the funding window
    k: int = 3  # settlement depth
    release: int = 40  # ledger height at which funding refunds unlock
    fee: int = 200
    fund_amount: int = 2500
    timeout: int = 10  # signing timeout, PoS blocks
    dkg_timeout: int = 3  # per DKG phase, PoS blocks
    preprocess_count: int = 8
    delta: int = 1
    reward_multiplier: int = 2
    signing_threshold: Optional[int] = None  # fixed override; default derived from n and f
    remove_misbehaving: bool = False

    def __post_init__(self):
        object.__setattr__(self, "f", Fraction(self.f))
        self.validate()

    def validate(self) -> None:
        def need(ok: bool, what: str):
            if not ok:
                raise ParameterError(what)

        need(0 <= self.f < Fraction(1, 2), "f must lie in [0, 1/2)")
        need(self.u >= 1 and self.b >= 1, "u and b must be positive")
        # the checkpoint spending Q_i exists only once C_{i+1} has formed, so
        # it cannot be final before C_{i+1} forms
        need(self.L >= 2, "L must be at least 2")
        need(self.k >= 1 and self.h0 >= 1, "k and h0 must be positive")
        need(self.release > self.h0 + self.k, "release must come after h0 + k")
        need(self.fee >= 0 and self.fund_amount > 0, "fee must be non-negative, fund_amount positive")
        need(self.timeout >= 1 and self.dkg_timeout >= 1 and self.delta >= 1, "timeouts and delta must be positive")
        need(self.y_wait >= 3 * self.dkg_timeout, "y_wait must cover the three DKG phases")
        need(self.preprocess_count >= 1, "preprocess_count must be positive")
        need(self.reward_multiplier >= 1, "reward_multiplier must be at least 1")

    def threshold(self, n: int) -> int:
        t = max(n // 2 + 1, int(self.f * n) + 1) if self.signing_threshold is None else self.signing_threshold
        if not (2 * t > n and t > self.f * n and t <= n):
            raise ParameterError(f"threshold {t} must exceed max(n/2, f*n) for n={n} and not exceed n")
        return t

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["f"] = str(self.f)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ProtocolParams":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ParameterError(f"unknown parameter(s): {', '.join(unknown)}")
        values = dict(doc)
        if "f" in values:
            try:
                values["f"] = Fraction(str(values["f"]))
            except (ValueError, ZeroDivisionError) as exc:
                raise ParameterError(f"f: {exc}") from exc
        for name, value in values.items():
            if name in ("f", "signing_threshold") or value is None:
                continue
            want = bool if name == "remove_misbehaving" else int
            if type(value) is not want:
                raise ParameterError(f"{name}: expected {want.__name__}, got {value!r}")
        return cls(**values)


class Status(str, enum.Enum):
    KEY_READY = "KeyReady"
    SIGNED = "Signed"
    SUBMITTED = "Submitted"
    CONFIRMED = "Confirmed"


@dataclass
class CheckpointRecord:
    index: int
    Q: Point
    pk: Point
    ckpt: bytes
    ckpt_height: int
    cid: bytes
    tx: Optional[LedgerTx] = None  # witnessed, kept for resubmission
    status: Status = Status.KEY_READY

    @property
    def txid(self) -> Optional[bytes]:
        return None if self.tx is None else self.tx.txid

    @property
    def outpoint(self) -> OutPoint:
        return OutPoint(self.txid, 0)

    def announcement(self) -> bytes:
        """What goes on the PoS chain once the transaction is confirmed."""
        return Announcement(self.index, self.pk, self.ckpt_height, self.cid, self.txid).encode()

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "Q": self.Q.hex(),
            "pk": self.pk.hex(),
            "ckpt": self.ckpt.hex(),
            "ckpt_height": self.ckpt_height,
            "cid": self.cid.hex(),
            "txid": None if self.tx is None else self.txid.hex(),
            "status": self.status.value,
        }


@dataclass(frozen=True)
class Announcement:
    index: int
    pk: Point
    ckpt_height: int
    cid: bytes
    txid: Optional[bytes]

    def encode(self) -> bytes:
        doc = {
            "index": self.index,
            "pk": self.pk.hex(),
            "ckpt_height": self.ckpt_height,
            "cid": self.cid.hex(),
            "txid": None if self.txid is None else self.txid.hex(),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def decode(cls, data: bytes) -> "Announcement":
        doc = json.loads(data)
        return cls(
            int(doc["index"]),
            Point.fromhex(doc["pk"]),
            int(doc["ckpt_height"]),
            bytes.fromhex(doc["cid"]),
            None if doc["txid"] is None else bytes.fromhex(doc["txid"]),
        )


def checkpoint_message(record: CheckpointRecord, sender: str) -> PosMessage:
    return PosMessage("checkpoint", sender, f"config/{record.index}", record.announcement())


def publish_config(store: ContentStore, config: Configuration, pk: Point, ckpt: bytes) -> tuple[bytes, ConfigPayload]:
    payload = ConfigPayload(config.index, config.members, pk, ckpt)
    return store.put(payload.encode()), payload


def build_checkpoint_tx(prev: CheckpointRecord, Q_next: Point, cid_next: bytes, fee: int) -> LedgerTx:
    """Unsigned Q_i -> ((amount - fee, Q_{i+1}), (0, OP_RETURN cid_{i+1}))."""
    amount = prev.tx.outputs[0].amount
    if amount <= fee:
        raise FundingExhausted(f"output of {amount} cannot pay the fee of {fee}")
    return LedgerTx((prev.outpoint,), (TxOutput(amount - fee, Q_next), TxOutput.op_return(cid_next)))


def commit_key(pk: Point) -> bytes:
    return tagged_digest(Tag.COMMIT_PK, pk.to_bytes(), 32)


@dataclass
class EventLog:
    """Deterministic JSON-lines record of a run."""

    events: list = field(default_factory=list)

    def emit(self, event: str, **data) -> dict:
        entry = {"seq": len(self.events), "event": event, **data}
        self.events.append(entry)
        return entry

    def select(self, event: str) -> list:
        return [e for e in self.events if e["event"] == event]

    def dumps(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events)


def _counts_json(counts: Counter) -> dict:
    out: dict = {}
    for key, value in sorted(counts.items(), key=lambda kv: str(kv[0])):
        if isinstance(key, tuple):
            out.setdefault(key[0], {})[str(key[1])] = value
        else:
            out[key] = value
    return out


@dataclass
class Participant:
    id: str
    pos_key: Point
    btc_sk: int
    btc_pk: Point

    @classmethod
    def derive(cls, member: str, seed) -> "Participant":
        pos_sk = random_scalar(derive_rng(seed, "pos-key", member))
        btc_sk = random_scalar(derive_rng(seed, "btc-key", member))
        return cls(member, base_mul(pos_sk), btc_sk, base_mul(btc_sk))


@dataclass
class Epoch:
    config: Configuration
    threshold: int
    dkg: DkgOutcome
    group: SigningGroup
    key: TaprootKey
    cid: bytes
    payload: ConfigPayload
    record: Optional[CheckpointRecord] = None

    @property
    def index(self) -> int:
        return self.config.index


@dataclass
class InitReport:
    record: CheckpointRecord
    inputs: list  # (outpoint, funder id)
    eligible: list
    rejected_claims: list
    refunds: list


class Pikachu:
    """One run of the protocol over a simulated PoS chain and ledger.

    ``faults`` maps config index -> {"dkg": {member: Fault}, "sign": {member: Fault}}.
    """

    def __init__(self, params: ProtocolParams, clock: Clock, store: ContentStore, seed, log: Optional[EventLog] = None, faults: Optional[dict] = None):
        if clock.ledger is None:
            raise ProtocolError("the orchestrator needs a ledger attached to the clock")
        self.params = params
        self.clock = clock
        self.store = store
        self.seed = seed
        self.log = log if log is not None else EventLog()
        self.faults = faults or {}
        self.epochs: list[Epoch] = []
        self.participants: dict[str, Participant] = {}
        self.banned: set = set()
        self.on_formation = []  # callbacks(epoch index), used by adversaries

    @property
    def pos(self):
        return self.clock.pos

    @property
    def ledger(self) -> SimChain:
        return self.clock.ledger

    def participant(self, member: str) -> Participant:
        if member not in self.participants:
            self.participants[member] = Participant.derive(member, self.seed)
        return self.participants[member]

    def _faults(self, config: Configuration, stage: str) -> dict:
        """Scripted faults for ``config`` keyed by protocol index; member ids
        in fault targets become indices too."""
        plan = self.faults.get(config.index, {}).get(stage, {})
        out = {}
        for member, fault in plan.items():
            targets = tuple(config.index_of(x) if isinstance(x, str) else x for x in fault.targets)
            out[config.index_of(member)] = Fault(fault.kind, targets)
        return out

    def _check_faults(self, config: Configuration) -> None:
        plan = self.faults.get(config.index, {})
        scripted = set()
        for stage in plan.values():
            for member, fault in stage.items():
                for who in (member,) + tuple(x for x in fault.targets if isinstance(x, str)):
                    if who not in config.ids:
                        raise ParameterError(f"config {config.index}: {who} is not a member")
                scripted.add(member)
        if len(scripted) > int(self.params.f * config.size):
            raise ParameterError(
                f"config {config.index}: {len(scripted)} scripted misbehavers exceed floor(f*n) = {int(self.params.f * config.size)}"
            )

    def _honest(self, epoch: Epoch) -> list[int]:
        bad = set(self._faults(epoch.config, "sign")) | set(self._faults(epoch.config, "dkg"))
        return [i for i in epoch.group.qualified if i not in bad]

    # -- reconfiguration ------------------------------------------------

    def on_reconfig(self, members, formed_at: int) -> Epoch:
        """Key generation by the new configuration; Q is tweaked with the
        hash of the block at which the configuration formed."""
        index = len(self.epochs)
        config = Configuration(index, tuple(sorted(members)), formed_at)
        self._check_faults(config)
        self.check_assumption(index)
        n = config.size
        t = self.params.threshold(n)
        ckpt = self.pos.block_hash(formed_at)
        dkg = run_dkg(
            self.clock,
            config.ids,
            t,
            f"dkg/{index}",
            self.seed,
            self._faults(config, "dkg"),
            self.params.dkg_timeout,
        )
        if dkg.finished_at > formed_at + self.params.y_wait and index > 0:
            raise ProtocolViolation(f"key generation for config {index} overran y_wait")
        key = tweak_pubkey(dkg.group_pubkey, ckpt)
        cid, payload = publish_config(self.store, config, dkg.group_pubkey, ckpt)
        group = SigningGroup.from_dkg(config.ids, t, dkg, f"nonces/{index}", self.seed, self.params.preprocess_count)
        group.publish_nonces(self.clock)
        epoch = Epoch(config, t, dkg, group, key, cid, payload)
        self.epochs.append(epoch)
        self.log.emit(
            "dkg",
            config=index,
            formed_at=formed_at,
            members=list(config.ids),
            n=n,
            t=t,
            pk=dkg.group_pubkey.hex(),
            Q=key.output.hex(),
            ckpt=ckpt.hex(),
            cid=cid.hex(),
            qualified=[config.member_at(i) for i in dkg.qualified],
            misbehaving=[config.member_at(i) for i in dkg.misbehaving],
            complaints={config.member_at(c): [config.member_at(d) for d in ds] for c, ds in sorted(dkg.complaints.items())},
            rehabilitated=[config.member_at(i) for i in dkg.rehabilitated],
            messages=_counts_json(dkg.counts),
            blocks=dkg.finished_at - dkg.started_at,
        )
        if self.params.remove_misbehaving and dkg.misbehaving:
            self.banned |= {config.member_at(i) for i in dkg.misbehaving}
        for hook in self.on_formation:
            hook(index)
        return epoch

    def check_assumption(self, forming: int) -> None:
        """Every checkpoint spending Q_j with j <= forming - L must be final
        before configuration ``forming`` exists."""
        for epoch in self.epochs:
            if epoch.index > forming - self.params.L:
                break
            nxt = self.epochs[epoch.index + 1] if epoch.index + 1 < len(self.epochs) else None
            spender = None if nxt is None or nxt.record is None else nxt.record.txid
            ok = spender is not None and self.ledger.is_final(spender, self.params.k)
            self.log.emit("assumption-check", forming=forming, spends_config=epoch.index, final=ok)
            if not ok:
                raise ProtocolViolation(f"checkpoint spending config {epoch.index} not final before config {forming}")

    # -- signing --------------------------------------------------------

    def run_signing_round(self, epoch: Epoch, tx: LedgerTx, label: str) -> LedgerTx:
        """Threshold-sign ``tx`` with ``epoch``'s key, retrying without
        cheaters, and return it witnessed for every input."""
        message = tx.txid
        beacon = self.pos.beacon(self.pos.height)
        faults = self._faults(epoch.config, "sign")
        outcome = run_signing(self.clock, epoch.group, message, epoch.key.output, beacon, f"sign/{label}", faults, self.params.timeout)
        sig = tweak_signature(outcome.signature, message, epoch.key)
        if not verify_key_path(epoch.key.output, message, sig):
            raise ProtocolViolation("tweaked signature does not verify under Q")
        honest = self._honest(epoch)
        sender = epoch.config.member_at(honest[0] if honest else epoch.group.qualified[0])
        self.pos.broadcast(PosMessage("frost/final", sender, f"sign/{label}", FinalSig(message, sig.z, sig.R).encode()))
        ids = epoch.config.member_at
        self.log.emit(
            "signing",
            label=label,
            config=epoch.index,
            rounds=outcome.rounds,
            attempts=[[ids(i) for i in a] for a in outcome.attempts],
            cheaters=[ids(i) for i in outcome.cheaters],
            messages=_counts_json(outcome.counts),
            txid=message.hex(),
        )
        if outcome.rounds > len(outcome.cheaters) + 1:
            raise ProtocolViolation("signing needed more restarts than there were cheaters")
        return tx.with_witnesses([sig] * len(tx.inputs))

    def submit_everywhere(self, epoch: Epoch, tx: LedgerTx) -> None:
        """Every honest signer submits; the ledger keeps one copy."""
        results = [self.ledger.submit(tx) for _ in self._honest(epoch) or [None]]
        accepted = [r for r in results if r.accepted]
        if not accepted:
            raise ProtocolViolation(f"ledger rejected checkpoint tx: {results[0].reason.value}")
        self.log.emit(
            "submit",
            txid=tx.txid.hex(),
            submissions=len(results),
            duplicates=sum(r.duplicate for r in results),
        )

    def confirm(self, txid: bytes) -> int:
        self.clock.wait_for(lambda: self.ledger.tx_height(txid) is not None, self.params.timeout)
        height = self.ledger.tx_height(txid)
        if height is None:
            raise ProtocolViolation(f"tx {txid.hex()} never confirmed")
        return height

    def announce(self, epoch: Epoch) -> None:
        honest = self._honest(epoch)
        sender = epoch.config.member_at(honest[0] if honest else 1)
        self.pos.broadcast(checkpoint_message(epoch.record, sender))
        self.clock.tick()

    def checkpoint(self, new: Epoch) -> CheckpointRecord:
        """The previous configuration moves the funds to the new key."""
        prev = self.epochs[new.index - 1]
        record = prev.record
        if self.ledger.tx_height(record.txid) is None:
            # the previous checkpoint went missing: put it back first
            self.ledger.submit(record.tx)
            self.log.emit("resubmit", txid=record.txid.hex())
            self.confirm(record.txid)
        try:
            unsigned = build_checkpoint_tx(record, new.key.output, new.cid, self.params.fee)
        except FundingExhausted:
            self.refill(prev)
            record = prev.record
            unsigned = build_checkpoint_tx(record, new.key.output, new.cid, self.params.fee)
        rec = CheckpointRecord(new.index, new.key.output, new.dkg.group_pubkey, new.payload.ckpt, new.config.formed_at, new.cid)
        new.record = rec
        rec.tx = self.run_signing_round(prev, unsigned, f"checkpoint/{new.index}")
        rec.status = Status.SIGNED
        self.submit_everywhere(prev, rec.tx)
        rec.status = Status.SUBMITTED
        height = self.confirm(rec.txid)
        rec.status = Status.CONFIRMED
        self.announce(new)
        shape_ok = (
            len(rec.tx.inputs) == 1
            and rec.tx.inputs[0] == record.outpoint
            and len(rec.tx.outputs) == 2
            and rec.tx.outputs[0].owner == new.key.output
            and rec.tx.outputs[1].is_op_return
            and rec.tx.outputs[1].amount == 0
            and rec.tx.outputs[1].data == new.cid
        )
        self.log.emit("checkpoint", ledger_height=height, shape_ok=shape_ok, **rec.to_json())
        if not shape_ok:
            raise ProtocolViolation("checkpoint transaction has the wrong shape")
        return rec

    def refill(self, epoch: Epoch) -> None:
        """Top up Q_i by rerunning the funding mechanics for the current
        head, then consolidate into a fresh Q_i output."""
        record = epoch.record
        release = self.ledger.height + (self.params.release - self.params.h0)
        opened = self.ledger.height
        funders = [epoch.config.member_at(i) for i in self._honest(epoch)]
        coins = self._mint_for([self.participant(m) for m in funders])
        for member in funders:
            self._fund(self.participant(member), coins[member], record.Q, release)
        self.clock.tick()
        deadline = self.ledger.height + 1
        outputs = [u for u in self.ledger.unspent_outputs(record.Q, before_height=deadline) if u.height > opened]
        inputs = (record.outpoint,) + tuple(u.outpoint for u in outputs)
        total = record.tx.outputs[0].amount + sum(u.output.amount for u in outputs)
        if total <= self.params.fee:
            raise FundingExhausted("refill brought in too little")
        unsigned = LedgerTx(inputs, (TxOutput(total - self.params.fee, record.Q), TxOutput.op_return(record.cid)))
        record.tx = self.run_signing_round(epoch, unsigned, f"refill/{epoch.index}")
        self.submit_everywhere(epoch, record.tx)
        height = self.confirm(record.txid)
        self.log.emit("refill", config=epoch.index, funders=funders, inputs=len(inputs), amount=total - self.params.fee, ledger_height=height)

    # -- initialization -------------------------------------------------

    def _mint_for(self, people) -> dict:
        coins = {p.id: self.ledger.mint(p.btc_pk, self.params.fund_amount + self.params.fee) for p in people}
        self.clock.tick()
        return coins

    def _fund(self, who: Participant, coin: OutPoint, Q: Point, release: int) -> LedgerTx:
        tx = LedgerTx((coin,), (TxOutput(self.params.fund_amount, Q, refund_key=who.btc_pk, release=release),))
        nonce = random_scalar(derive_rng(self.seed, "fund-nonce", who.id, tx.txid))
        tx = tx.with_witnesses([sign_key_path(who.btc_sk, tx.txid, nonce)])
        result = self.ledger.submit(tx)
        if not result.accepted:
            raise ProtocolViolation(f"funding tx of {who.id} rejected: {result.reason.value}")
        return tx

    def run_init_protocol(self, members: list[str], late: tuple = (), absent: tuple = (), claims: Optional[dict] = None) -> InitReport:
        """Fund Q_0 and spend everything that reached it before h0.

        ``late`` members fund after h0, ``absent`` members never fund,
        ``claims`` maps a member to the member whose ledger key it reveals
        (impersonation attempts).
        """
        params = self.params
        claims = dict(claims or {})
        people = [self.participant(m) for m in sorted(members)]
        for p in people:
            self.pos.broadcast(PosMessage("init/commit", p.id, "init", commit_key(p.btc_pk)))
        self.clock.tick()
        commitments = {msg.sender: msg.body for _, msg in self.pos.messages("init/commit", "init")}
        self.log.emit("init-commit", members=sorted(commitments))

        epoch = self.on_reconfig(tuple((p.id, p.pos_key) for p in people), 0)
        Q0 = epoch.key.output
        # Q_0 is public before any coins move, so the genesis state is
        # announced up front
        record = CheckpointRecord(0, Q0, epoch.dkg.group_pubkey, epoch.payload.ckpt, 0, epoch.cid)
        epoch.record = record
        self.announce(epoch)

        coins = self._mint_for([p for p in people if p.id not in absent])
        funding = {}
        for p in people:
            if p.id not in late and p.id not in absent:
                funding[p.id] = self._fund(p, coins[p.id], Q0, params.release)
        self.clock.tick()
        if any(self.ledger.tx_height(tx.txid) >= params.h0 for tx in funding.values()):
            raise ProtocolViolation("on-time funding confirmed after h0; raise h0")
        self.clock.wait_for(lambda: self.ledger.height >= params.h0, params.h0 + 1)
        if self.ledger.height < params.h0:
            raise ProtocolViolation("funding window overran h0")
        for p in people:
            if p.id in late:
                funding[p.id] = self._fund(p, coins[p.id], Q0, params.release)
        self.clock.tick()
        for member, tx in sorted(funding.items()):
            self.log.emit("funding", member=member, txid=tx.txid.hex(), ledger_height=self.ledger.tx_height(tx.txid), late=member in late)
        self.clock.wait_for(lambda: self.ledger.height >= params.h0 + params.k, params.h0 + params.k)

        # every honest member derives the same input set from the ledger
        utxos = self.ledger.unspent_outputs(Q0, before_height=params.h0)
        total = sum(u.output.amount for u in utxos)
        if total <= params.fee:
            raise FundingExhausted("nothing usable reached Q_0 before h0")
        unsigned = LedgerTx(tuple(u.outpoint for u in utxos), (TxOutput(total - params.fee, Q0), TxOutput.op_return(epoch.cid)))
        record.tx = self.run_signing_round(epoch, unsigned, "init")
        record.status = Status.SIGNED
        self.submit_everywhere(epoch, record.tx)
        record.status = Status.SUBMITTED
        height = self.confirm(record.txid)
        record.status = Status.CONFIRMED
        funders_by_key = {u.output.refund_key: u for u in utxos}
        inputs = [(str(u.outpoint), next(p.id for p in people if p.btc_pk == u.output.refund_key)) for u in utxos]
        self.log.emit("init-tx", ledger_height=height, inputs=[m for _, m in inputs], amount=total - params.fee, **record.to_json())

        # reward claims: reveal the ledger key behind the commitment
        for p in people:
            revealed = self.participant(claims[p.id]).btc_pk if p.id in claims else p.btc_pk
            self.pos.broadcast(PosMessage("init/reveal", p.id, "init", revealed.to_bytes()))
        self.clock.tick()
        eligible, rejected = [], []
        for _, msg in self.pos.messages("init/reveal", "init"):
            revealed = Point.from_bytes(msg.body)
            if commitments.get(msg.sender) != commit_key(revealed):
                rejected.append({"member": msg.sender, "reason": "commitment-mismatch"})
            elif revealed not in funders_by_key:
                rejected.append({"member": msg.sender, "reason": "not-in-initial-tx"})
            else:
                eligible.append(msg.sender)
        reward = params.reward_multiplier * params.fee
        self.log.emit("rewards", eligible=eligible, reward_each=reward, rejected=rejected)

        refunds = self.settle_refunds(Q0, [p for p in people if p.id in funding], params.release)
        return InitReport(record, inputs, eligible, rejected, refunds)

    def settle_refunds(self, Q: Point, funders: list, release: int) -> list:
        """Funders whose output was left out take it back via the timelock,
        which the ledger refuses before ``release``."""
        refunds = []
        for p in funders:
            for utxo in self.ledger.unspent_outputs(Q):
                if utxo.output.refund_key != p.btc_pk:
                    continue
                tx = LedgerTx((utxo.outpoint,), (TxOutput(utxo.output.amount - self.params.fee, p.btc_pk),))
                nonce = random_scalar(derive_rng(self.seed, "refund-nonce", p.id, tx.txid))
                tx = tx.with_witnesses([sign_key_path(p.btc_sk, tx.txid, nonce)])
                early = self.ledger.submit(tx) if self.ledger.height + 1 < release else None
                self.clock.wait_for(lambda: self.ledger.height + 1 >= release, release)
                result = self.ledger.submit(tx)
                self.clock.tick()
                entry = {
                    "member": p.id,
                    "early": None if early is None else (early.reason.value if early.reason else "accepted"),
                    "result": "accepted" if result.accepted else result.reason.value,
                    "ledger_height": self.ledger.tx_height(tx.txid),
                }
                refunds.append(entry)
                self.log.emit("refund", **entry)
        return refunds

