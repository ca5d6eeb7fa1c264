"""Offline verification: follow the checkpoint chain on the ledger from Q_0
to its unspent head, then accept the newest served PoS state whose key and
block hash reproduce the head's taproot output."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .curve import Point
from .ledger import LedgerBackend, LedgerTx, OutPoint
from .pos import ChainView, ConfigPayload, ContentStore, IntegrityError, NotFoundError, PosError
from .protocol import Announcement
from .taproot import tweak_pubkey


class VerificationError(Exception):
    pass


class NoValidInitialTx(VerificationError):
    pass


class StructuralError(VerificationError):
    pass


class DataUnavailable(VerificationError):
    pass


class Verdict(str, enum.Enum):
    ACCEPTED = "Accepted"
    REJECTED = "RejectedNoValidState"


@dataclass(frozen=True)
class ChainHead:
    tx: Optional[LedgerTx]
    Q: Point
    cid: Optional[bytes]
    hops: int


@dataclass(frozen=True)
class VerificationOutcome:
    head_tx: Optional[bytes]
    Q_head: Point
    cid: Optional[bytes]
    accepted_members: tuple = ()
    rollback_count: int = 0
    verdict: Verdict = Verdict.REJECTED
    accepted_index: Optional[int] = None
    hops: int = 0
    notes: tuple = field(default=())

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPTED

    def to_json(self) -> dict:
        return {
            "head_tx": None if self.head_tx is None else self.head_tx.hex(),
            "Q_head": self.Q_head.hex(),
            "cid": None if self.cid is None else self.cid.hex(),
            "accepted_members": list(self.accepted_members),
            "accepted_index": self.accepted_index,
            "rollback_count": self.rollback_count,
            "verdict": self.verdict.value,
            "hops": self.hops,
        }


def _q_output(tx: LedgerTx) -> int:
    spendable = [i for i, o in enumerate(tx.outputs) if not o.is_op_return]
    if len(spendable) != 1:
        raise StructuralError(f"tx {tx.txid.hex()} has {len(spendable)} spendable outputs, expected 1")
    return spendable[0]


def _cid(tx: LedgerTx) -> bytes:
    data = [o.data for o in tx.outputs if o.is_op_return]
    if len(data) != 1 or len(data[0]) != 32:
        raise StructuralError(f"tx {tx.txid.hex()} lacks a single 32-byte OP_RETURN cid")
    return data[0]


def resolve_initial_tx(ledger: LedgerBackend, Q0: Point, h0: int) -> Optional[LedgerTx]:
    """The spend of Q_0 whose inputs all confirmed before h0, or None if Q_0
    was never spent."""
    spenders: dict[bytes, LedgerTx] = {}
    for funding in ledger.outputs_to(Q0):
        for index, out in enumerate(funding.outputs):
            if out.owner != Q0:
                continue
            spender = ledger.find_spending_tx(OutPoint(funding.txid, index))
            if spender is not None:
                spenders[spender.txid] = spender
    if not spenders:
        return None
    valid = []
    for tx in spenders.values():
        ok = True
        for op in tx.inputs:
            parent = ledger.get_tx(op.txid)
            height = ledger.tx_height(op.txid)
            if parent is None or parent.outputs[op.index].owner != Q0 or height is None or height >= h0:
                ok = False
                break
        if ok:
            valid.append(tx)
    if not valid:
        raise NoValidInitialTx("every spend of Q_0 uses funds that arrived at or after h0")
    return min(valid, key=lambda tx: (ledger.tx_height(tx.txid), tx.txid))


def walk_chain(ledger: LedgerBackend, tx0: LedgerTx) -> ChainHead:
    tx, hops = tx0, 0
    while True:
        index = _q_output(tx)
        spender = ledger.find_spending_tx(OutPoint(tx.txid, index))
        if spender is None:
            return ChainHead(tx, tx.outputs[index].owner, _cid(tx), hops)
        tx, hops = spender, hops + 1


def _announcements(view: ChainView) -> list[tuple[int, Announcement]]:
    found = []
    for height, msg in view.messages("checkpoint"):
        try:
            found.append((height, Announcement.decode(msg.body)))
        except (KeyError, TypeError, ValueError):
            continue  # junk in the served chain is just not a checkpoint
    return found


def _payload(store: ContentStore, cid: bytes) -> ConfigPayload:
    try:
        return ConfigPayload.decode(store.get(cid))
    except (NotFoundError, IntegrityError) as exc:
        raise DataUnavailable(f"configuration {cid.hex()} unavailable: {exc}") from exc
    except PosError as exc:
        raise DataUnavailable(str(exc)) from exc


def validate_served_chain(Q_head: Point, cid: Optional[bytes], view: ChainView, store: ContentStore, head: Optional[ChainHead] = None) -> VerificationOutcome:
    """Walk the served chain's checkpoints newest first; each mismatch rolls
    the chain back to the previous one."""
    payload = None if cid is None else _payload(store, cid)
    base = dict(head_tx=None if head is None or head.tx is None else head.tx.txid, Q_head=Q_head, cid=cid, hops=0 if head is None else head.hops)
    if not view.is_linked():
        return VerificationOutcome(**base, notes=("served chain is not hash-linked",))
    rollbacks = 0
    for height, ann in reversed(_announcements(view)):
        if 0 <= ann.ckpt_height < height:
            ckpt = view.block_hash(ann.ckpt_height)
            if tweak_pubkey(ann.pk, ckpt).output == Q_head:
                accepted = payload
                if accepted is None:
                    # nothing checkpointed yet: trust the payload the record names
                    accepted = _payload(store, ann.cid)
                if accepted.pk == ann.pk and accepted.ckpt == ckpt:
                    return VerificationOutcome(
                        **base,
                        accepted_members=accepted.ids,
                        accepted_index=ann.index,
                        rollback_count=rollbacks,
                        verdict=Verdict.ACCEPTED,
                    )
        rollbacks += 1
    return VerificationOutcome(**base, rollback_count=rollbacks)


def verify(ledger: LedgerBackend, store: ContentStore, view: ChainView, Q0: Point, h0: int) -> VerificationOutcome:
    tx0 = resolve_initial_tx(ledger, Q0, h0)
    if tx0 is None:
        return validate_served_chain(Q0, None, view, store)
    head = walk_chain(ledger, tx0)
    return validate_served_chain(head.Q, head.cid, view, store, head)
