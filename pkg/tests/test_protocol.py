from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pikachu.curve import base_mul
from pikachu.ledger import LedgerTx, OutPoint, RejectReason, SimChain, TxOutput
from pikachu.pos import ContentStore, PosChain
from pikachu.protocol import (
    Announcement,
    CheckpointRecord,
    EventLog,
    FundingExhausted,
    ParameterError,
    Pikachu,
    ProtocolError,
    ProtocolParams,
    ProtocolViolation,
    Status,
    build_checkpoint_tx,
)
from pikachu.rounds import Clock, Fault
from pikachu.taproot import sign_key_path, verify_key_path

MEMBERS = ["v01", "v02", "v03", "v04", "v05"]


def make(params=None, seed=3, faults=None):
    clock = Clock(PosChain(b"protocol-test"), SimChain())
    return Pikachu(params or ProtocolParams(), clock, ContentStore(), seed, EventLog(), faults)


def reconfigure(p, members, gap=None):
    for _ in range(p.params.k if gap is None else gap):
        p.clock.tick()
    formed = p.pos.height
    return p.on_reconfig(tuple((m, p.participant(m).pos_key) for m in members), formed)


# -- parameters ------------------------------------------------------------


@given(st.integers(min_value=1, max_value=200), st.fractions(min_value=0, max_value=Fraction(49, 100)))
def test_threshold_exceeds_half_and_f(n, f):
    t = ProtocolParams(f=f).threshold(n)
    assert 2 * t > n and t > f * n and t <= n
    assert t == max(n // 2 + 1, int(f * n) + 1)


def test_threshold_examples():
    params = ProtocolParams()
    assert [params.threshold(n) for n in (1, 3, 5, 7, 21)] == [1, 2, 3, 4, 11]
    assert ProtocolParams(signing_threshold=4).threshold(5) == 4
    with pytest.raises(ParameterError):
        ProtocolParams(signing_threshold=2).threshold(5)


@pytest.mark.parametrize(
    "bad",
    [
        {"f": Fraction(1, 2)},
        {"L": 1},
        {"u": 0},
        {"release": 14},
        {"y_wait": 5},
        {"fund_amount": 0},
        {"delta": 0},
    ],
)
def test_invalid_params(bad):
    with pytest.raises(ParameterError):
        ProtocolParams(**bad)


def test_params_json_roundtrip_and_type_checks():
    params = ProtocolParams(u=3, f=Fraction(1, 4), remove_misbehaving=True)
    assert ProtocolParams.from_json(params.to_json()) == params
    assert params.to_json()["f"] == "1/4"
    with pytest.raises(ParameterError, match="unknown"):
        ProtocolParams.from_json({"nope": 1})
    with pytest.raises(ParameterError):
        ProtocolParams.from_json({"u": "2"})
    with pytest.raises(ParameterError):
        ProtocolParams.from_json({"remove_misbehaving": 1})
    with pytest.raises(ParameterError):
        ProtocolParams.from_json({"f": "x"})


def test_announcement_roundtrip():
    a = Announcement(2, base_mul(5), 17, bytes(range(32)), None)
    assert Announcement.decode(a.encode()) == a
    b = Announcement(3, base_mul(6), 20, bytes(32), b"\x01" * 32)
    assert Announcement.decode(b.encode()) == b


def test_checkpoint_tx_needs_more_than_the_fee():
    tx = LedgerTx((OutPoint(bytes(32), 0),), (TxOutput(150, base_mul(1)),))
    record = CheckpointRecord(0, base_mul(1), base_mul(2), bytes(32), 0, bytes(32), tx)
    with pytest.raises(FundingExhausted):
        build_checkpoint_tx(record, base_mul(3), bytes(32), 200)
    ok = build_checkpoint_tx(record, base_mul(3), b"c" * 32, 100)
    assert [o.amount for o in ok.outputs] == [50, 0]
    assert ok.outputs[1].data == b"c" * 32 and ok.inputs == (record.outpoint,)


# -- initialization ----------------------------------------------------------


def test_init_with_everyone_on_time():
    p = make()
    report = p.run_init_protocol(MEMBERS)
    tx0 = report.record.tx
    assert sorted(m for _, m in report.inputs) == MEMBERS
    assert tx0.outputs[0].amount == 5 * 2500 - 200
    assert tx0.outputs[0].owner == p.epochs[0].key.output
    assert tx0.outputs[1].data == p.epochs[0].cid
    assert verify_key_path(report.record.Q, tx0.txid, tx0.witnesses[0])
    assert report.record.status is Status.CONFIRMED
    assert report.eligible == MEMBERS and report.refunds == []


def test_late_funder_is_left_out_and_refunded():
    p = make()
    report = p.run_init_protocol(MEMBERS, late=("v03",))
    assert sorted(m for _, m in report.inputs) == ["v01", "v02", "v04", "v05"]
    assert report.record.tx.outputs[0].amount == 4 * 2500 - 200 == 9800
    assert report.refunds == [{"member": "v03", "early": "premature-timelock", "result": "accepted", "ledger_height": 40}]
    assert "v03" not in report.eligible
    assert {"member": "v03", "reason": "not-in-initial-tx"} in report.rejected_claims


def test_absent_member_contributes_nothing():
    p = make()
    report = p.run_init_protocol(MEMBERS, absent=("v05",))
    assert sorted(m for _, m in report.inputs) == MEMBERS[:4]
    assert report.refunds == []


def test_impersonation_fails_the_commitment_check():
    p = make()
    report = p.run_init_protocol(MEMBERS, claims={"v02": "v01"})
    assert {"member": "v02", "reason": "commitment-mismatch"} in report.rejected_claims
    assert "v02" not in report.eligible and "v01" in report.eligible


def test_init_needs_more_than_the_fee():
    p = make(ProtocolParams(fund_amount=150))
    with pytest.raises(FundingExhausted):
        p.run_init_protocol(["v01", "v02", "v03"], late=("v02", "v03"))


# -- reconfiguration and checkpoints -----------------------------------------


def test_checkpoint_moves_funds_to_the_next_key():
    p = make()
    p.run_init_protocol(MEMBERS)
    epoch = reconfigure(p, ["v01", "v02", "v03", "v04", "n001"])
    record = p.checkpoint(epoch)
    tx = record.tx
    assert tx.inputs == (p.epochs[0].record.outpoint,)
    assert [o.amount for o in tx.outputs] == [12300 - 200, 0]
    assert tx.outputs[0].owner == epoch.key.output
    assert tx.outputs[1].data == epoch.cid
    assert verify_key_path(p.epochs[0].key.output, tx.txid, tx.witnesses[0])
    assert p.ledger.find_spending_tx(p.epochs[0].record.outpoint) == tx
    assert [e["event"] for e in p.log.events].count("checkpoint") == 1


def test_refill_when_the_head_output_runs_dry():
    p = make(ProtocolParams(fund_amount=100))
    p.run_init_protocol(MEMBERS)  # 500 - 200 = 300
    p.checkpoint(reconfigure(p, MEMBERS))  # 300 -> 100
    assert p.epochs[1].record.tx.outputs[0].amount == 100
    record = p.checkpoint(reconfigure(p, MEMBERS))
    refill = p.log.select("refill")
    assert len(refill) == 1 and refill[0]["config"] == 1
    # the refill consolidated 5 fresh coins with the old output
    assert refill[0]["amount"] == 100 + 5 * 100 - 200
    assert record.tx.outputs[0].amount == refill[0]["amount"] - 200


def test_signing_faults_are_tolerated_and_named():
    # v01 sits in the first signer set for this seed
    faults = {0: {"sign": {"v01": Fault("withhold")}}}
    p = make(faults=faults)
    report = p.run_init_protocol(MEMBERS)
    signing = p.log.select("signing")[0]
    assert "v01" in signing["attempts"][0]
    assert signing["cheaters"] == ["v01"] and signing["rounds"] == 2
    assert all("v01" not in a for a in signing["attempts"][1:])
    assert report.record.status is Status.CONFIRMED


def test_scripted_faults_are_bounded_by_f():
    faults = {0: {"dkg": {"v01": Fault("abort"), "v02": Fault("abort")}}}
    with pytest.raises(ParameterError, match="floor"):
        make(faults=faults).run_init_protocol(MEMBERS)
    with pytest.raises(ParameterError, match="not a member"):
        make(faults={0: {"dkg": {"zz": Fault("abort")}}}).run_init_protocol(MEMBERS)


def test_forming_too_fast_violates_finality_assumption():
    p = make(ProtocolParams(k=10, release=60, h0=12))
    p.run_init_protocol(MEMBERS)
    p.checkpoint(reconfigure(p, MEMBERS, gap=1))
    with pytest.raises(ProtocolViolation, match="not final"):
        reconfigure(p, MEMBERS, gap=1)


def test_orchestrator_needs_a_ledger():
    with pytest.raises(ProtocolError):
        Pikachu(ProtocolParams(), Clock(PosChain()), ContentStore(), 0)


def test_ledger_refuses_minority_spend_of_head():
    p = make()
    p.run_init_protocol(MEMBERS)
    record = p.epochs[0].record
    forged = LedgerTx((record.outpoint,), (TxOutput(100, base_mul(9)),))
    forged = forged.with_witnesses([sign_key_path(p.epochs[0].dkg.results[1].my_share, forged.txid, 7)])
    assert p.ledger.submit(forged).reason is RejectReason.BAD_SIGNATURE
