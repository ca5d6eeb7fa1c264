"""A deterministic stand-in for the proof-of-work ledger.

UTXO model with key-path spends, OP_RETURN data outputs and absolute-height
refund timelocks. There are no forks: a confirmed transaction never moves.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from .codec import Writer
from .curve import Point
from .schnorr import SchnorrSignature
from .taproot import verify_key_path

DEFAULT_FEE = 200
OP_RETURN_LIMIT = 80
LEDGER_FORMAT = "pikachu-ledger"
LEDGER_VERSION = 1


class LedgerError(Exception):
    pass


class LedgerLoadError(LedgerError, ValueError):
    pass


class RejectReason(str, enum.Enum):
    BAD_SIGNATURE = "bad-signature"
    DOUBLE_SPEND = "double-spend"
    OVERSPEND = "overspend"
    PREMATURE_TIMELOCK = "premature-timelock"
    UNKNOWN_INPUT = "unknown-input"
    MALFORMED = "malformed"


@dataclass(frozen=True, order=True)
class OutPoint:
    txid: bytes
    index: int

    def __str__(self) -> str:
        return f"{self.txid.hex()}:{self.index}"


@dataclass(frozen=True)
class TxOutput:
    amount: int
    owner: Optional[Point] = None
    data: Optional[bytes] = None
    refund_key: Optional[Point] = None
    release: Optional[int] = None

    def __post_init__(self):
        # both would make the body unencodable, hence the txid undefined
        if self.amount < 0:
            raise ValueError("negative output amount")
        if self.refund_key is not None and self.release is None:
            raise ValueError("a refund key needs a release height")

    @classmethod
    def op_return(cls, data: bytes) -> "TxOutput":
        return cls(0, data=bytes(data))

    @property
    def is_op_return(self) -> bool:
        return self.owner is None

    def encode(self, w: Writer) -> None:
        w.u64(self.amount)
        if self.is_op_return:
            w.u8(0).blob(self.data or b"")
        else:
            w.u8(1).point(self.owner)
            if self.refund_key is None:
                w.u8(0)
            else:
                w.u8(1).point(self.refund_key).u64(self.release)

    def to_json(self) -> dict:
        return {
            "amount": self.amount,
            "owner": None if self.owner is None else self.owner.hex(),
            "data": None if self.data is None else self.data.hex(),
            "refund_key": None if self.refund_key is None else self.refund_key.hex(),
            "release": self.release,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TxOutput":
        return cls(
            amount=int(obj["amount"]),
            owner=None if obj["owner"] is None else Point.fromhex(obj["owner"]),
            data=None if obj["data"] is None else bytes.fromhex(obj["data"]),
            refund_key=None if obj["refund_key"] is None else Point.fromhex(obj["refund_key"]),
            release=obj["release"],
        )


@dataclass(frozen=True)
class LedgerTx:
    inputs: tuple[OutPoint, ...]
    outputs: tuple[TxOutput, ...]
    witnesses: tuple[SchnorrSignature, ...] = ()
    coinbase: Optional[int] = None  # mint sequence number, coinbase only

    def body(self) -> bytes:
        w = Writer().raw(b"pikachu/tx/v1")
        w.u64(0 if self.coinbase is None else self.coinbase + 1)
        w.u32(len(self.inputs))
        for op in self.inputs:
            w.raw(op.txid).u32(op.index)
        w.u32(len(self.outputs))
        for out in self.outputs:
            out.encode(w)
        return w.getvalue()

    @property
    def txid(self) -> bytes:
        """Hash of the body without witnesses; also the signing message."""
        return hashlib.sha256(self.body()).digest()

    digest = txid

    def outpoint(self, index: int) -> OutPoint:
        return OutPoint(self.txid, index)

    def with_witnesses(self, witnesses: Iterable[SchnorrSignature]) -> "LedgerTx":
        return LedgerTx(self.inputs, self.outputs, tuple(witnesses), self.coinbase)

    def op_return_data(self) -> Optional[bytes]:
        for out in self.outputs:
            if out.is_op_return:
                return out.data
        return None

    def to_json(self) -> dict:
        return {
            "inputs": [[op.txid.hex(), op.index] for op in self.inputs],
            "outputs": [o.to_json() for o in self.outputs],
            "witnesses": [w.to_bytes().hex() for w in self.witnesses],
            "coinbase": self.coinbase,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LedgerTx":
        return cls(
            inputs=tuple(OutPoint(bytes.fromhex(t), int(i)) for t, i in obj["inputs"]),
            outputs=tuple(TxOutput.from_json(o) for o in obj["outputs"]),
            witnesses=tuple(SchnorrSignature.from_bytes(bytes.fromhex(w)) for w in obj["witnesses"]),
            coinbase=obj.get("coinbase"),
        )


@dataclass(frozen=True)
class Utxo:
    outpoint: OutPoint
    output: TxOutput
    height: int


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    reason: Optional[RejectReason] = None
    duplicate: bool = False
    txid: Optional[bytes] = None

    def __bool__(self) -> bool:
        return self.accepted


class LedgerBackend(Protocol):
    """What the protocol and the verifier need from a ledger. A real node
    adapter would implement this."""

    @property
    def height(self) -> int: ...

    def submit(self, tx: LedgerTx) -> SubmitResult: ...

    def mine_block(self) -> int: ...

    def find_spending_tx(self, outpoint: OutPoint) -> Optional[LedgerTx]: ...

    def outputs_to(self, owner: Point, before_height: Optional[int] = None) -> list[LedgerTx]: ...

    def get_tx(self, txid: bytes) -> Optional[LedgerTx]: ...

    def tx_height(self, txid: bytes) -> Optional[int]: ...


@dataclass
class SimChain:
    blocks: list = field(default_factory=lambda: [[]])
    utxo_set: dict = field(default_factory=dict)
    spender_index: dict = field(default_factory=dict)
    txs: dict = field(default_factory=dict)
    positions: dict = field(default_factory=dict)  # txid -> (height, position)
    pending: list = field(default_factory=list)
    pending_spends: dict = field(default_factory=dict)
    minted: int = 0
    fees: int = 0
    _mints: int = 0

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    # -- writes --

    def mint(self, owner: Point, amount: int) -> OutPoint:
        """Create coins out of thin air (the simulation's coinbase)."""
        if amount <= 0:
            raise LedgerError("mint amount must be positive")
        tx = LedgerTx((), (TxOutput(amount, owner),), (), coinbase=self._mints)
        self._mints += 1
        self.pending.append(tx)
        return tx.outpoint(0)

    def check(self, tx: LedgerTx, at_height: Optional[int] = None) -> SubmitResult:
        """Validate ``tx`` for inclusion at ``at_height`` (default: next block)."""
        at_height = self.height + 1 if at_height is None else at_height
        txid = tx.txid
        if tx.coinbase is not None or not tx.inputs or not tx.outputs:
            return SubmitResult(False, RejectReason.MALFORMED, txid=txid)
        if len(tx.witnesses) != len(tx.inputs) or len(set(tx.inputs)) != len(tx.inputs):
            return SubmitResult(False, RejectReason.MALFORMED, txid=txid)
        for out in tx.outputs:
            if out.is_op_return and (out.amount != 0 or len(out.data or b"") > OP_RETURN_LIMIT):
                return SubmitResult(False, RejectReason.MALFORMED, txid=txid)
        for op in tx.inputs:
            if op in self.spender_index or op in self.pending_spends:
                return SubmitResult(False, RejectReason.DOUBLE_SPEND, txid=txid)
            if op not in self.utxo_set:
                return SubmitResult(False, RejectReason.UNKNOWN_INPUT, txid=txid)
        total_in = sum(self.utxo_set[op].output.amount for op in tx.inputs)
        if sum(o.amount for o in tx.outputs) > total_in:
            return SubmitResult(False, RejectReason.OVERSPEND, txid=txid)
        verified: dict = {}

        def ok(key: Point, sig: SchnorrSignature) -> bool:
            memo = (key, sig)
            if memo not in verified:
                verified[memo] = verify_key_path(key, txid, sig)
            return verified[memo]

        for op, sig in zip(tx.inputs, tx.witnesses):
            out = self.utxo_set[op].output
            if ok(out.owner, sig):
                continue
            if out.refund_key is not None and ok(out.refund_key, sig):
                if at_height < out.release:
                    return SubmitResult(False, RejectReason.PREMATURE_TIMELOCK, txid=txid)
                continue
            return SubmitResult(False, RejectReason.BAD_SIGNATURE, txid=txid)
        return SubmitResult(True, txid=txid)

    def submit(self, tx: LedgerTx) -> SubmitResult:
        txid = tx.txid
        for queued in self.pending:
            if queued.txid == txid:
                if queued == tx:
                    return SubmitResult(True, duplicate=True, txid=txid)
                # same body, different witnesses: the first one wins
                return SubmitResult(False, RejectReason.DOUBLE_SPEND, txid=txid)
        result = self.check(tx)
        if result.accepted:
            self.pending.append(tx)
            for op in tx.inputs:
                self.pending_spends[op] = txid
        return result

    def mine_block(self) -> int:
        height = self.height + 1
        block = []
        for tx in self.pending:
            self._apply(tx, height, len(block))
            block.append(tx)
        self.pending = []
        self.pending_spends = {}
        self.blocks.append(block)
        return height

    def mine_until(self, height: int) -> int:
        while self.height < height:
            self.mine_block()
        return self.height

    def _apply(self, tx: LedgerTx, height: int, position: int) -> None:
        txid = tx.txid
        total_in = 0
        for op in tx.inputs:
            total_in += self.utxo_set.pop(op).output.amount
            self.spender_index[op] = txid
        for idx, out in enumerate(tx.outputs):
            if not out.is_op_return:
                self.utxo_set[OutPoint(txid, idx)] = Utxo(OutPoint(txid, idx), out, height)
        total_out = sum(o.amount for o in tx.outputs)
        if tx.coinbase is not None:
            self.minted += total_out
        else:
            self.fees += total_in - total_out
        self.txs[txid] = tx
        self.positions[txid] = (height, position)

    # -- queries --

    def get_tx(self, txid: bytes) -> Optional[LedgerTx]:
        return self.txs.get(txid)

    def tx_height(self, txid: bytes) -> Optional[int]:
        pos = self.positions.get(txid)
        return None if pos is None else pos[0]

    def confirmations(self, txid: bytes) -> int:
        h = self.tx_height(txid)
        return 0 if h is None else self.height - h + 1

    def is_final(self, txid: bytes, k: int) -> bool:
        """Settled: the chain has grown k blocks past the confirming block."""
        h = self.tx_height(txid)
        return h is not None and self.height >= h + k

    def find_spending_tx(self, outpoint: OutPoint) -> Optional[LedgerTx]:
        txid = self.spender_index.get(outpoint)
        return None if txid is None else self.txs[txid]

    def outputs_to(self, owner: Point, before_height: Optional[int] = None) -> list[LedgerTx]:
        found = []
        for txid, (height, _) in sorted(self.positions.items(), key=lambda kv: kv[1]):
            if before_height is not None and height >= before_height:
                continue
            tx = self.txs[txid]
            if any(o.owner == owner for o in tx.outputs):
                found.append(tx)
        return found

    def unspent_outputs(self, owner: Point, before_height: Optional[int] = None) -> list[Utxo]:
        found = [u for u in self.utxo_set.values() if u.output.owner == owner]
        if before_height is not None:
            found = [u for u in found if u.height < before_height]
        return sorted(found, key=lambda u: (u.height, self.positions[u.outpoint.txid][1], u.outpoint.index))

    def output(self, outpoint: OutPoint) -> Optional[TxOutput]:
        tx = self.txs.get(outpoint.txid)
        if tx is None or outpoint.index >= len(tx.outputs):
            return None
        return tx.outputs[outpoint.index]

    def confirmed_txs(self):
        for height, block in enumerate(self.blocks):
            for tx in block:
                yield height, tx

    def utxo_total(self) -> int:
        return sum(u.output.amount for u in self.utxo_set.values())

    # -- persistence --

    def dumps(self) -> str:
        lines = [
            json.dumps(
                {
                    "format": LEDGER_FORMAT,
                    "version": LEDGER_VERSION,
                    "height": self.height,
                    "tx_count": len(self.txs),
                },
                sort_keys=True,
            )
        ]
        for height, tx in self.confirmed_txs():
            lines.append(json.dumps({"height": height, "tx": tx.to_json()}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "SimChain":
        """Rebuild a ledger from a dump, re-validating every transaction."""
        try:
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise LedgerLoadError(f"line {exc.lineno}: {exc.msg}") from exc
        if not rows:
            raise LedgerLoadError("empty ledger dump")
        header = rows[0]
        if header.get("format") != LEDGER_FORMAT or header.get("version") != LEDGER_VERSION:
            raise LedgerLoadError("not a pikachu ledger dump (bad header)")
        if header.get("tx_count") != len(rows) - 1:
            raise LedgerLoadError(f"header announces {header.get('tx_count')} txs, found {len(rows) - 1}")
        chain = cls()
        for lineno, row in enumerate(rows[1:], start=2):
            try:
                height = int(row["height"])
                tx = LedgerTx.from_json(row["tx"])
            except (KeyError, TypeError, ValueError) as exc:
                raise LedgerLoadError(f"line {lineno}: {exc}") from exc
            if height <= chain.height:
                raise LedgerLoadError(f"line {lineno}: heights must increase block by block")
            chain.mine_until(height - 1)
            if tx.coinbase is not None:
                chain.pending.append(tx)
                chain._mints = max(chain._mints, tx.coinbase + 1)
            else:
                result = chain.submit(tx)
                if not result.accepted:
                    raise LedgerLoadError(f"line {lineno}: transaction rejected ({result.reason.value})")
            # several txs may share a height; mine once the height is complete
            nxt = rows[lineno] if lineno < len(rows) else None
            if nxt is None or int(nxt.get("height", -1)) != height:
                chain.mine_block()
        chain.mine_until(int(header["height"]))
        return chain
