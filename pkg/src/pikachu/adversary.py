"""Scripted long-range attacker.

Once a configuration is L configurations old, the attacker owns every share
of it and so the full secret behind its key. It then tries what an
eventually-compromised committee could: rewrite the PoS history, respend
checkpoint outputs, and fund Q_0 late to grow an alternative branch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .curve import N, Point, base_mul
from .dkg import interpolate_at_zero
from .ledger import LedgerTx, TxOutput
from .pos import ChainView, ConfigPayload, PosBlock, PosMessage, ReconfigRequest, beacon_value
from .protocol import Announcement, Pikachu
from .schnorr import derive_rng, random_scalar
from .taproot import TaprootKey, sign_key_path, tweak_pubkey, tweak_seckey


@dataclass(frozen=True)
class LeakedKey:
    index: int
    secret: int  # reconstructed group secret
    key: TaprootKey

    @property
    def spend_key(self) -> int:
        return tweak_seckey(self.secret, self.key.commitment)


class Adversary:
    def __init__(self, pikachu: Pikachu, seed):
        self.p = pikachu
        self.seed = seed
        self.leaked: dict[int, LeakedKey] = {}
        self.sk = random_scalar(derive_rng(seed, "adversary", "key"))
        self.pk = base_mul(self.sk)
        pikachu.on_formation.append(self.on_formation)

    @property
    def log(self):
        return self.p.log

    def _rng(self, *labels):
        return derive_rng(self.seed, "adversary", *labels)

    def on_formation(self, index: int) -> None:
        """Configuration ``index`` formed: everything L or more configurations
        older leaks in full."""
        for epoch in self.p.epochs:
            if epoch.index > index - self.p.params.L or epoch.index in self.leaked:
                continue
            shares = {i: r.my_share for i, r in epoch.dkg.results.items() if i in epoch.dkg.qualified}
            secret = interpolate_at_zero(dict(list(shares.items())[: epoch.threshold]))
            if base_mul(secret) != epoch.dkg.group_pubkey:
                raise AssertionError("leaked shares do not reconstruct the key")
            self.leaked[epoch.index] = LeakedKey(epoch.index, secret, epoch.key)
            self.log.emit("leak", config=epoch.index, at_formation=index)

    def require_leaked(self, index: int) -> LeakedKey:
        if index not in self.leaked:
            raise KeyError(f"config {index} has not leaked (L={self.p.params.L})")
        return self.leaked[index]

    def _sign(self, sk: int, tx: LedgerTx, *labels) -> LedgerTx:
        nonce = random_scalar(self._rng("nonce", tx.txid, *labels))
        sig = sign_key_path(sk, tx.txid, nonce)
        return tx.with_witnesses([sig] * len(tx.inputs))

    def _forged_payload(self, index: int, ckpt: bytes, pk: Point) -> bytes:
        members = tuple((f"x{k:02d}", base_mul(random_scalar(self._rng("member", index, k)))) for k in range(1, 4))
        return self.p.store.put(ConfigPayload(index, members, pk, ckpt).encode())

    # -- ledger attacks -------------------------------------------------

    def respend(self, j: int) -> dict:
        """Spend config j's output again, to a key of the attacker's choice."""
        leaked = self.require_leaked(j)
        record = self.p.epochs[j].record
        fake_q = tweak_pubkey(self.pk, b"forged").output
        amount = record.tx.outputs[0].amount
        tx = LedgerTx((record.outpoint,), (TxOutput(amount - self.p.params.fee, fake_q), TxOutput.op_return(bytes(32))))
        tx = self._sign(leaked.spend_key, tx, "respend", j)
        result = self.p.ledger.submit(tx)
        self.p.clock.tick()
        entry = {"config": j, "accepted": result.accepted, "reason": None if result.accepted else result.reason.value}
        self.log.emit("attack-respend", **entry)
        return entry

    def post_h0_fund(self) -> dict:
        """Fund Q_0 after h0, then spend that coin with the leaked genesis
        key into an attacker branch."""
        leaked = self.require_leaked(0)
        ledger, Q0 = self.p.ledger, leaked.key.output
        coin = ledger.mint(self.pk, self.p.params.fund_amount + self.p.params.fee)
        self.p.clock.tick()
        fund = LedgerTx((coin,), (TxOutput(self.p.params.fund_amount, Q0),))
        fund = self._sign(self.sk, fund, "fund")
        funded = ledger.submit(fund)
        self.p.clock.tick()
        fake_q = tweak_pubkey(self.pk, b"branch").output
        branch_cid = self._forged_payload(1, bytes(32), self.pk)
        spend = LedgerTx((fund.outpoint(0),), (TxOutput(self.p.params.fund_amount - self.p.params.fee, fake_q), TxOutput.op_return(branch_cid)))
        spend = self._sign(leaked.spend_key, spend, "branch")
        spent = ledger.submit(spend)
        self.p.clock.tick()
        entry = {
            "fund_accepted": funded.accepted,
            "fund_height": ledger.tx_height(fund.txid),
            "branch_accepted": spent.accepted,
            "branch_txid": spend.txid.hex(),
        }
        self.log.emit("attack-post-h0", **entry)
        return entry

    def minority_spend(self, corrupt: Optional[int] = None) -> dict:
        """With only floor(f*n) shares of the live configuration, try to move
        the head anyway."""
        epoch = self.p.epochs[-1]
        n = epoch.config.size
        count = int(self.p.params.f * n) if corrupt is None else corrupt
        if count >= epoch.threshold:
            raise ValueError("a minority attack needs fewer shares than the threshold")
        qualified = list(epoch.dkg.qualified)
        order = qualified[:]
        self._rng("minority").shuffle(order)
        shares = {i: epoch.dkg.results[i].my_share for i in sorted(order[:count])}
        guess = interpolate_at_zero(shares) if shares else random_scalar(self._rng("guess"))
        if guess == 0:
            guess = 1
        record = epoch.record
        amount = record.tx.outputs[0].amount
        fake_q = tweak_pubkey(self.pk, b"minority").output
        tx = LedgerTx((record.outpoint,), (TxOutput(amount - self.p.params.fee, fake_q), TxOutput.op_return(bytes(32))))
        tx = self._sign(tweak_seckey(guess, epoch.key.commitment) % N or 1, tx, "minority")
        result = self.p.ledger.submit(tx)
        self.p.clock.tick()
        entry = {
            "config": epoch.index,
            "shares": len(shares),
            "threshold": epoch.threshold,
            "accepted": result.accepted,
            "reason": None if result.accepted else result.reason.value,
        }
        self.log.emit("attack-minority", **entry)
        return entry

    # -- forged PoS histories --------------------------------------------

    def _extend(self, blocks: list, messages=()) -> int:
        height = len(blocks)
        seed = b"forged/" + repr(self.seed).encode()
        blocks.append(PosBlock(height, blocks[-1].hash, beacon_value(seed, height), tuple(messages)))
        return height

    def _announce(self, blocks: list, index: int, pk: Point, ckpt_height: int, cid: bytes) -> None:
        body = Announcement(index, pk, ckpt_height, cid, None).encode()
        self._extend(blocks, [PosMessage("checkpoint", "x01", f"config/{index}", body)])

    def forge_fork(self, j: int) -> ChainView:
        """Rewrite history after config j's announcement using its leaked
        keys: new members, attacker-held keys, and a replay of the honest
        head's announcement pointing into the forged blocks."""
        self.require_leaked(j)
        honest = self.p.pos
        fork_at = max(h for h, m in honest.messages("checkpoint") if m.session == f"config/{j}")
        blocks = list(honest.blocks[: fork_at + 1])
        last = self.p.epochs[-1].index
        for index in range(j + 1, last + 2):
            leave = PosMessage("reconfig", "x01", "", ReconfigRequest(f"v{index:02d}", "leave").encode())
            x = self._extend(blocks, [leave])
            pk = base_mul(random_scalar(self._rng("fork-key", index)))
            ckpt = blocks[x].hash
            self._announce(blocks, index, pk, x, self._forged_payload(index, ckpt, pk))
        head = self.p.epochs[-1]
        # the honest head key, but pinned to a forged block
        self._announce(blocks, head.index, head.dkg.group_pubkey, fork_at + 1, head.cid)
        view = ChainView(tuple(blocks))
        self.log.emit("attack-fork", at_config=j, fork_height=fork_at, forged_height=view.height, honest_height=honest.height)
        return view

    def forge_tip(self) -> ChainView:
        """The honest chain with one forged checkpoint appended."""
        blocks = list(self.p.pos.blocks)
        x = self._extend(blocks)
        index = self.p.epochs[-1].index + 1
        pk = self.pk
        self._announce(blocks, index, pk, x, self._forged_payload(index, blocks[x].hash, pk))
        view = ChainView(tuple(blocks))
        self.log.emit("attack-tip", forged_index=index, forged_height=view.height)
        return view

