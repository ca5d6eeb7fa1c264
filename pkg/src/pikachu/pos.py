"""Simulated proof-of-stake chain: blocks, power table, beacon, broadcast log
and a content-addressed store for configuration payloads."""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional

from .codec import Writer
from .curve import Point
from .schnorr import Tag, hash_to_scalar, tagged_digest

POS_FORMAT = "pikachu-pos"
STORE_FORMAT = "pikachu-store"
DUMP_VERSION = 1


class PosError(Exception):
    pass


class FutureHeightError(PosError, ValueError):
    pass


class NotFoundError(PosError, KeyError):
    pass


class IntegrityError(PosError):
    pass


class PosLoadError(PosError, ValueError):
    pass


# -- configurations ------------------------------------------------------


@dataclass(frozen=True)
class Configuration:
    index: int
    members: tuple[tuple[str, Point], ...]  # sorted by id; position + 1 is the protocol index
    formed_at: int

    def __post_init__(self):
        ids = [m for m, _ in self.members]
        if not ids:
            raise PosError("a configuration needs at least one member")
        if len(set(ids)) != len(ids):
            raise PosError("duplicate member ids")
        if ids != sorted(ids):
            raise PosError("members must be sorted by id")

    @classmethod
    def build(cls, index: int, members: dict, formed_at: int) -> "Configuration":
        return cls(index, tuple(sorted(members.items())), formed_at)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m for m, _ in self.members)

    @property
    def size(self) -> int:
        return len(self.members)

    def index_of(self, member: str) -> int:
        return self.ids.index(member) + 1

    def member_at(self, index: int) -> str:
        return self.members[index - 1][0]


def symmetric_difference(a, b) -> int:
    ids_a = set(a.ids if isinstance(a, Configuration) else a)
    ids_b = set(b.ids if isinstance(b, Configuration) else b)
    return len(ids_a ^ ids_b)


@dataclass(frozen=True)
class ConfigPayload:
    """What a verifier fetches by cid: enough to rebuild the tweaked key."""

    index: int
    members: tuple[tuple[str, Point], ...]
    pk: Point
    ckpt: bytes

    def encode(self) -> bytes:
        doc = {
            "index": self.index,
            "members": [[m, key.hex()] for m, key in sorted(self.members)],
            "pk": self.pk.hex(),
            "ckpt": self.ckpt.hex(),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def decode(cls, data: bytes) -> "ConfigPayload":
        try:
            doc = json.loads(data)
            return cls(
                index=int(doc["index"]),
                members=tuple((str(m), Point.fromhex(k)) for m, k in doc["members"]),
                pk=Point.fromhex(doc["pk"]),
                ckpt=bytes.fromhex(doc["ckpt"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise PosError(f"bad configuration payload: {exc}") from exc

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(m for m, _ in sorted(self.members))


@dataclass(frozen=True)
class ReconfigRequest:
    member: str
    op: str  # "join" or "leave"
    pubkey: Optional[Point] = None

    def encode(self) -> bytes:
        key = "" if self.pubkey is None else self.pubkey.hex()
        return json.dumps([self.member, self.op, key]).encode()

    @classmethod
    def decode(cls, data: bytes) -> "ReconfigRequest":
        member, op, key = json.loads(data)
        return cls(member, op, Point.fromhex(key) if key else None)


@dataclass(frozen=True)
class ReconfigEvent:
    height: int
    members: tuple[tuple[str, Point], ...]


@dataclass
class PowerTable:
    """Flat model: one key, one unit of power."""

    members: dict = field(default_factory=dict)
    churn: int = 0

    def apply(self, req: ReconfigRequest) -> bool:
        if req.op == "join":
            if req.member in self.members or req.pubkey is None:
                return False
            self.members[req.member] = req.pubkey
        elif req.op == "leave":
            if req.member not in self.members or len(self.members) == 1:
                return False
            del self.members[req.member]
        else:
            return False
        self.churn += 1
        return True

    def reconfig_trigger(self, u: int, height: int) -> Optional[ReconfigEvent]:
        if self.churn < u:
            return None
        self.churn = 0
        return ReconfigEvent(height, tuple(sorted(self.members.items())))


def churn_schedule(
    rng: random.Random,
    members: dict,
    key_for,
    rounds: int,
    u: int,
    b: int,
    min_size: int = 3,
    max_size: Optional[int] = None,
) -> list[list[ReconfigRequest]]:
    """``rounds`` batches of exactly ``u`` valid requests; the membership
    after each batch differs from the one before it by at most ``b``.

    ``key_for(member_id)`` supplies the PoS key of a joining member.
    """
    if u < 1 or b < 1:
        raise PosError("u and b must be positive")
    current = dict(members)
    fresh = 0
    batches = []
    for _ in range(rounds):
        start = set(current)
        batch = []
        while len(batch) < u:
            diff = set(current) ^ start
            options = []
            if len(diff) < b:
                if max_size is None or len(current) < max_size:
                    options.append("join")
                if len(current) > min_size:
                    options.append("leave")
            # undoing an earlier change in this batch never grows the difference
            undo_join = sorted(m for m in diff if m in current)
            undo_leave = sorted(m for m in diff if m not in current)
            if not options:
                if undo_join and len(current) > min_size:
                    options.append("undo-join")
                if undo_leave and (max_size is None or len(current) < max_size):
                    options.append("undo-leave")
            if not options:
                raise PosError("churn bound too tight for the requested schedule")
            choice = rng.choice(options)
            if choice == "join":
                while True:
                    fresh += 1
                    candidate = f"n{fresh:03d}"
                    if candidate not in current and candidate not in start:
                        break
                req = ReconfigRequest(candidate, "join", key_for(candidate))
            elif choice == "leave":
                req = ReconfigRequest(rng.choice(sorted(set(current) & start) or sorted(current)), "leave")
            elif choice == "undo-join":
                req = ReconfigRequest(rng.choice(undo_join), "leave")
            else:
                m = rng.choice(undo_leave)
                req = ReconfigRequest(m, "join", key_for(m))
            if req.op == "join":
                current[req.member] = req.pubkey
            else:
                del current[req.member]
            batch.append(req)
        batches.append(batch)
    return batches


# -- the chain -------------------------------------------------------------


@dataclass(frozen=True)
class PosMessage:
    kind: str
    sender: str
    session: str
    body: bytes

    def encode(self, w: Writer) -> None:
        w.text(self.kind).text(self.sender).text(self.session).blob(self.body)

    def to_json(self) -> list:
        return [self.kind, self.sender, self.session, self.body.hex()]

    @classmethod
    def from_json(cls, row) -> "PosMessage":
        kind, sender, session, body = row
        return cls(kind, sender, session, bytes.fromhex(body))


@dataclass(frozen=True)
class PosBlock:
    height: int
    parent: bytes
    beacon: int
    messages: tuple[PosMessage, ...]

    @cached_property
    def hash(self) -> bytes:
        w = Writer().raw(b"pikachu/pos-block/v1").u64(self.height).raw(self.parent).scalar(self.beacon)
        w.u32(len(self.messages))
        for msg in self.messages:
            msg.encode(w)
        return hashlib.sha256(w.getvalue()).digest()

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "parent": self.parent.hex(),
            "beacon": format(self.beacon, "064x"),
            "messages": [m.to_json() for m in self.messages],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PosBlock":
        return cls(
            height=int(obj["height"]),
            parent=bytes.fromhex(obj["parent"]),
            beacon=int(obj["beacon"], 16),
            messages=tuple(PosMessage.from_json(m) for m in obj["messages"]),
        )


def beacon_value(seed: bytes, height: int) -> int:
    return hash_to_scalar(Tag.BEACON, seed + height.to_bytes(8, "big"))


class PosChain:
    """An append-only, instantly final block log. Messages broadcast at
    height h land in block h + delta, in submission order."""

    def __init__(self, seed: bytes = b"", delta: int = 1, power_table: Optional[PowerTable] = None, u: Optional[int] = None):
        if delta < 1:
            raise PosError("delta must be at least one block")
        self.seed = bytes(seed)
        self.delta = delta
        self.power_table = power_table
        self.u = u
        self.events: list[ReconfigEvent] = []
        self.pending: list[tuple[int, PosMessage]] = []
        genesis = PosBlock(0, bytes(32), beacon_value(self.seed, 0), ())
        self.blocks: list[PosBlock] = [genesis]

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def genesis_hash(self) -> bytes:
        return self.blocks[0].hash

    def broadcast(self, msg: PosMessage) -> int:
        due = self.height + self.delta
        self.pending.append((due, msg))
        return due

    def mine_block(self, extra: Iterable[PosMessage] = ()) -> PosBlock:
        height = self.height + 1
        ready = [m for due, m in self.pending if due <= height]
        self.pending = [(due, m) for due, m in self.pending if due > height]
        block = PosBlock(height, self.blocks[-1].hash, beacon_value(self.seed, height), tuple(ready) + tuple(extra))
        self.blocks.append(block)
        self._apply_reconfigs(block)
        return block

    def _apply_reconfigs(self, block: PosBlock) -> None:
        if self.power_table is None:
            return
        for msg in block.messages:
            if msg.kind != "reconfig":
                continue
            if self.power_table.apply(ReconfigRequest.decode(msg.body)) and self.u is not None:
                event = self.power_table.reconfig_trigger(self.u, block.height)
                if event is not None:
                    self.events.append(event)

    def beacon(self, height: int) -> int:
        if height > self.height:
            raise FutureHeightError(f"beacon for height {height} requested at height {self.height}")
        return self.blocks[height].beacon

    def block_hash(self, height: int) -> bytes:
        if height > self.height:
            raise FutureHeightError(f"no block at height {height}")
        return self.blocks[height].hash

    def messages(self, kind: Optional[str] = None, session: Optional[str] = None, since: int = 0, until: Optional[int] = None):
        """(height, message) pairs in chain order."""
        until = self.height if until is None else until
        for block in self.blocks[since : until + 1]:
            for msg in block.messages:
                if (kind is None or msg.kind == kind) and (session is None or msg.session == session):
                    yield block.height, msg

    def view(self, height: Optional[int] = None) -> "ChainView":
        height = self.height if height is None else height
        return ChainView(tuple(self.blocks[: height + 1]))

    def dumps(self) -> str:
        return self.view().dumps()


@dataclass(frozen=True)
class ChainView:
    """A read-only chain as served to a verifier; may be forged."""

    blocks: tuple[PosBlock, ...]

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def block_hash(self, height: int) -> bytes:
        if not 0 <= height <= self.height:
            raise FutureHeightError(f"no block at height {height}")
        return self.blocks[height].hash

    def messages(self, kind: Optional[str] = None):
        for block in self.blocks:
            for msg in block.messages:
                if kind is None or msg.kind == kind:
                    yield block.height, msg

    def truncate(self, height: int) -> "ChainView":
        return ChainView(self.blocks[: height + 1])

    def is_linked(self) -> bool:
        return all(b.height == h for h, b in enumerate(self.blocks)) and all(
            self.blocks[h].parent == self.blocks[h - 1].hash for h in range(1, len(self.blocks))
        )

    def dumps(self) -> str:
        lines = [json.dumps({"format": POS_FORMAT, "version": DUMP_VERSION, "height": self.height}, sort_keys=True)]
        lines += [json.dumps(b.to_json(), sort_keys=True) for b in self.blocks]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ChainView":
        try:
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise PosLoadError(f"line {exc.lineno}: {exc.msg}") from exc
        if not rows or rows[0].get("format") != POS_FORMAT or rows[0].get("version") != DUMP_VERSION:
            raise PosLoadError("not a pikachu PoS chain dump (bad header)")
        try:
            blocks = tuple(PosBlock.from_json(r) for r in rows[1:])
        except (KeyError, TypeError, ValueError) as exc:
            raise PosLoadError(f"bad block: {exc}") from exc
        if len(blocks) != rows[0].get("height", -2) + 1:
            raise PosLoadError("block count does not match header height")
        view = cls(blocks)
        if not view.is_linked():
            raise PosLoadError("blocks are not hash-linked")
        return view


# -- content-addressed store -----------------------------------------------


def content_id(payload: bytes) -> bytes:
    return tagged_digest(Tag.CID, payload, 32)


@dataclass
class ContentStore:
    entries: dict = field(default_factory=dict)

    def put(self, payload: bytes) -> bytes:
        cid = content_id(payload)
        self.entries[cid] = bytes(payload)
        return cid

    def get(self, cid: bytes) -> bytes:
        try:
            payload = self.entries[cid]
        except KeyError:
            raise NotFoundError(cid.hex()) from None
        if content_id(payload) != cid:
            raise IntegrityError(f"payload under {cid.hex()} does not match its cid")
        return payload

    def __contains__(self, cid: bytes) -> bool:
        return cid in self.entries

    def dumps(self) -> str:
        doc = {
            "format": STORE_FORMAT,
            "version": DUMP_VERSION,
            "entries": {cid.hex(): payload.hex() for cid, payload in sorted(self.entries.items())},
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ContentStore":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PosLoadError(f"store dump: line {exc.lineno}: {exc.msg}") from exc
        if not isinstance(doc, dict) or doc.get("format") != STORE_FORMAT or doc.get("version") != DUMP_VERSION:
            raise PosLoadError("not a pikachu store dump (bad header)")
        try:
            return cls({bytes.fromhex(k): bytes.fromhex(v) for k, v in doc["entries"].items()})
        except (KeyError, AttributeError, ValueError) as exc:
            raise PosLoadError(f"store dump: {exc}") from exc
