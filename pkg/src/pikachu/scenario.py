"""Scenario files: parsing with located errors, and deterministic runs that
end in a list of named checks."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .adversary import Adversary
from .dkg import DkgError
from .frost import FrostError
from .ledger import OutPoint, SimChain
from .pos import ContentStore, PosChain, PosError, PosMessage, PowerTable, ReconfigRequest, churn_schedule
from .protocol import EventLog, ParameterError, Pikachu, ProtocolError, ProtocolParams
from .rounds import DKG_FAULTS, Clock, Fault
from .schnorr import derive_rng
from .verifier import VerificationError, resolve_initial_tx, verify, walk_chain

SCENARIO_FORMAT = "pikachu-scenario"
SCENARIO_VERSION = 1

_SIGN_ACTIONS = {"withhold-partial": "withhold", "bad-partial": "bad-partial"}
_ATTACKS = ("lra-fork", "post-h0-fund", "minority-spend", "serve-forged-chain")
_TOP_KEYS = {
    "format", "version", "name", "seed", "validators", "reconfigurations", "params",
    "funding", "claims", "schedule", "adversary", "expect",
}


class ScenarioError(ValueError):
    def __init__(self, location: str, message: str):
        super().__init__(f"{location}: {message}")
        self.location = location


def member_id(k: int) -> str:
    return f"v{k:02d}"


@dataclass
class Scenario:
    name: str
    seed: int
    validators: int
    reconfigurations: int
    params: ProtocolParams
    late: tuple = ()
    absent: tuple = ()
    claims: dict = field(default_factory=dict)
    schedule: Optional[list] = None  # explicit batches of (op, member)
    adversary: list = field(default_factory=list)
    expect: dict = field(default_factory=dict)

    @property
    def initial_members(self) -> list[str]:
        return [member_id(k) for k in range(1, self.validators + 1)]

    def faults(self) -> dict:
        plan: dict = {}
        for action in self.adversary:
            kind = action["action"]
            if kind in DKG_FAULTS or kind == "abort-dkg":
                stage, fault = "dkg", Fault("abort" if kind == "abort-dkg" else kind, tuple(action.get("targets", ())))
            elif kind in _SIGN_ACTIONS:
                stage, fault = "sign", Fault(_SIGN_ACTIONS[kind])
            else:
                continue
            plan.setdefault(action["config"], {}).setdefault(stage, {})[action["member"]] = fault
        return plan


def _want(cond: bool, where: str, what: str) -> None:
    if not cond:
        raise ScenarioError(where, what)


def _int(doc: dict, key: str, where: str, minimum: int = 0) -> int:
    value = doc.get(key)
    _want(type(value) is int, f"{where}.{key}", "expected an integer")
    _want(value >= minimum, f"{where}.{key}", f"must be at least {minimum}")
    return value


def _members(value, where: str, known: set) -> tuple:
    _want(isinstance(value, list) and all(isinstance(m, str) for m in value), where, "expected a list of member ids")
    for k, m in enumerate(value):
        _want(m in known, f"{where}[{k}]", f"unknown member {m!r}")
    return tuple(value)


def parse_scenario(text: str, source: str = "scenario") -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}", exc.msg) from exc
    where = source
    _want(isinstance(doc, dict), where, "top level must be an object")
    _want(doc.get("format") == SCENARIO_FORMAT, f"{where}.format", f"expected {SCENARIO_FORMAT!r}")
    _want(doc.get("version") == SCENARIO_VERSION, f"{where}.version", f"expected {SCENARIO_VERSION}")
    unknown = sorted(set(doc) - _TOP_KEYS)
    _want(not unknown, where, f"unknown key(s): {', '.join(unknown)}")
    seed = _int(doc, "seed", where)
    validators = _int(doc, "validators", where, 1)
    reconfigurations = _int(doc, "reconfigurations", where)
    params_doc = doc.get("params", {})
    _want(isinstance(params_doc, dict), f"{where}.params", "expected an object")
    try:
        params = ProtocolParams.from_json(params_doc)
        params.threshold(validators)
    except (ParameterError, TypeError) as exc:
        raise ScenarioError(f"{where}.params", str(exc)) from exc
    initial = {member_id(k) for k in range(1, validators + 1)}

    funding = doc.get("funding", {})
    _want(isinstance(funding, dict) and set(funding) <= {"late", "absent"}, f"{where}.funding", "expected {late, absent}")
    late = _members(funding.get("late", []), f"{where}.funding.late", initial)
    absent = _members(funding.get("absent", []), f"{where}.funding.absent", initial)
    _want(not set(late) & set(absent), f"{where}.funding", "a member cannot be both late and absent")
    _want(len(set(late) | set(absent)) < validators, f"{where}.funding", "someone has to fund on time")

    claims = doc.get("claims", {})
    _want(isinstance(claims, dict), f"{where}.claims", "expected an object member -> member")
    for m, victim in claims.items():
        _want(m in initial, f"{where}.claims.{m}", "unknown member")
        _want(victim in initial and victim != m, f"{where}.claims.{m}", "must name another initial member")

    schedule = doc.get("schedule")
    if schedule is not None:
        _want(isinstance(schedule, list), f"{where}.schedule", "expected a list of batches")
        _want(len(schedule) == reconfigurations, f"{where}.schedule", "need one batch per reconfiguration")
        for b, batch in enumerate(schedule):
            _want(isinstance(batch, list) and len(batch) == params.u, f"{where}.schedule[{b}]", f"expected {params.u} requests")
            for r, req in enumerate(batch):
                loc = f"{where}.schedule[{b}][{r}]"
                _want(isinstance(req, list) and len(req) == 2 and req[0] in ("join", "leave") and isinstance(req[1], str), loc, 'expected ["join"|"leave", member]')

    adversary = doc.get("adversary", [])
    _want(isinstance(adversary, list), f"{where}.adversary", "expected a list")
    actions = []
    for a, action in enumerate(adversary):
        loc = f"{where}.adversary[{a}]"
        _want(isinstance(action, dict), loc, "expected an object")
        kind = action.get("action")
        known = DKG_FAULTS + ("abort-dkg",) + tuple(_SIGN_ACTIONS) + _ATTACKS
        _want(kind in known, f"{loc}.action", f"unknown action {kind!r}")
        if kind == "abort":
            raise ScenarioError(f"{loc}.action", "use 'abort-dkg'")
        if kind in _ATTACKS:
            if kind == "lra-fork":
                _int(action, "at_config", loc)
            if kind == "serve-forged-chain":
                _want(action.get("kind") in ("tip",), f"{loc}.kind", "expected 'tip'")
        else:
            _int(action, "config", loc)
            _want(action["config"] <= reconfigurations, f"{loc}.config", "beyond the last configuration")
            _want(isinstance(action.get("member"), str), f"{loc}.member", "expected a member id")
            if action["config"] == 0:
                _want(action["member"] in initial, f"{loc}.member", f"unknown member {action['member']!r}")
            targets = action.get("targets", [])
            _want(isinstance(targets, list) and all(isinstance(t, str) for t in targets), f"{loc}.targets", "expected member ids")
        actions.append(dict(action))

    expect = doc.get("expect", {})
    _want(isinstance(expect, dict), f"{where}.expect", "expected an object")
    return Scenario(
        name=str(doc.get("name", Path(source).stem)),
        seed=seed,
        validators=validators,
        reconfigurations=reconfigurations,
        params=params,
        late=late,
        absent=absent,
        claims=dict(claims),
        schedule=schedule,
        adversary=actions,
        expect=expect,
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(str(path), exc.strerror or str(exc)) from exc
    return parse_scenario(text, path.name)


BUNDLED = Path(__file__).parent / "scenarios"


def bundled(name: str) -> Path:
    return BUNDLED / (name if name.endswith(".scn") else name + ".scn")


# -- running --------------------------------------------------------------


@dataclass
class RunResult:
    scenario: Scenario
    log: EventLog
    checks: dict
    pikachu: Optional[Pikachu] = None
    views: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and all(self.checks.values())

    @property
    def Q0(self):
        return self.pikachu.epochs[0].key.output


def run_scenario(sc: Scenario) -> RunResult:
    log = EventLog()
    checks: dict = {}
    result = RunResult(sc, log, checks)
    params = sc.params
    members = sc.initial_members
    log.emit("scenario", name=sc.name, seed=sc.seed, validators=sc.validators, reconfigurations=sc.reconfigurations, params=params.to_json())

    table = PowerTable()
    pos = PosChain(hashlib.sha256(f"pikachu-scenario/{sc.seed}".encode()).digest(), params.delta, power_table=table, u=params.u)
    clock = Clock(pos, SimChain())
    store = ContentStore()
    p = Pikachu(params, clock, store, sc.seed, log, sc.faults())
    result.pikachu = p
    attacks = [a for a in sc.adversary if a["action"] in _ATTACKS]
    adversary = Adversary(p, sc.seed) if attacks else None
    try:
        for m in members:
            table.members[m] = p.participant(m).pos_key
        init = p.run_init_protocol(members, sc.late, sc.absent, sc.claims)
        on_time = sorted(set(members) - set(sc.late) - set(sc.absent))
        checks["init-inputs"] = sorted(m for _, m in init.inputs) == on_time
        impostors = sorted(sc.claims)
        checks["rewards"] = sorted(init.eligible) == sorted(set(on_time) - set(impostors)) and all(
            r["reason"] == "commitment-mismatch" for r in init.rejected_claims if r["member"] in impostors
        )
        checks["refunds"] = all(r["result"] == "accepted" and r["early"] in (None, "premature-timelock") for r in init.refunds) and sorted(
            r["member"] for r in init.refunds
        ) == sorted(sc.late)

        if sc.schedule is not None:
            batches = [
                [ReconfigRequest(m, op, p.participant(m).pos_key if op == "join" else None) for op, m in batch]
                for batch in sc.schedule
            ]
        else:
            batches = churn_schedule(
                derive_rng(sc.seed, "churn"),
                dict(table.members),
                lambda m: p.participant(m).pos_key,
                sc.reconfigurations,
                params.u,
                params.b,
                min_size=3,
                max_size=sc.validators + params.b,
            )
        for number, batch in enumerate(batches, start=1):
            before = dict(table.members)
            events = len(pos.events)
            for req in batch:
                pos.broadcast(PosMessage("reconfig", req.member, "", req.encode()))
                clock.tick()
            if len(pos.events) != events + 1:
                raise ParameterError(f"schedule batch {number - 1} did not trigger exactly one reconfiguration")
            event = pos.events[-1]
            last_req_height = max(h for h, m in pos.messages("reconfig") if m.body == batch[-1].encode())
            log.emit(
                "reconfig",
                config=number,
                height=event.height,
                trigger_height_ok=event.height == last_req_height,
                requests=[[r.op, r.member] for r in batch],
                members=[m for m, _ in event.members],
                difference=len(set(before) ^ {m for m, _ in event.members}),
            )
            checks.setdefault("churn-bound", True)
            checks["churn-bound"] &= len(set(before) ^ {m for m, _ in event.members}) <= params.b
            checks.setdefault("trigger-height", True)
            checks["trigger-height"] &= event.height == last_req_height
            epoch = p.on_reconfig(event.members, event.height)
            p.checkpoint(epoch)
            for m in sorted(p.banned & set(table.members)):
                del table.members[m]

        if adversary is not None:
            _run_attacks(result, adversary, attacks)
        _final_checks(result)
    except (ParameterError, ScenarioError):
        raise
    except (ProtocolError, DkgError, FrostError, VerificationError, PosError) as exc:
        result.error = f"{type(exc).__name__}: {exc}"
        log.emit("failure", error=result.error)
    log.emit("summary", ok=result.ok, checks=dict(sorted(checks.items())), error=result.error)
    return result


def _run_attacks(result: RunResult, adv: Adversary, attacks: list) -> None:
    checks = result.checks
    p = adv.p
    for action in attacks:
        kind = action["action"]
        if kind == "lra-fork":
            j = action["at_config"]
            respend = adv.respend(j)
            checks["respend-rejected"] = respend["reason"] == "double-spend"
            result.views["lra-fork"] = adv.forge_fork(j)
        elif kind == "post-h0-fund":
            branch = adv.post_h0_fund()
            tx0 = resolve_initial_tx(p.ledger, p.epochs[0].key.output, p.params.h0)
            checks["post-h0-excluded"] = branch["branch_accepted"] and tx0.txid == p.epochs[0].record.txid
            p.log.emit("resolve-initial", txid=tx0.txid.hex(), honest=tx0.txid == p.epochs[0].record.txid)
        elif kind == "minority-spend":
            attempt = adv.minority_spend()
            checks["minority-rejected"] = attempt["reason"] == "bad-signature"
        elif kind == "serve-forged-chain":
            result.views["forged-tip"] = adv.forge_tip()


def _final_checks(result: RunResult) -> None:
    p, checks, sc = result.pikachu, result.checks, result.scenario
    ledger = p.ledger
    records = [e.record for e in p.epochs]
    checks["all-confirmed"] = all(r.status.value == "Confirmed" for r in records)
    checkpoints = result.log.select("checkpoint")
    checks["checkpoint-count"] = len(checkpoints) == sc.expect.get("checkpoints", sc.reconfigurations)
    checks["two-output-shape"] = all(c["shape_ok"] for c in checkpoints)
    # one spend chain from tx0 through every record, in order
    tx0 = resolve_initial_tx(ledger, p.epochs[0].key.output, p.params.h0)
    head = walk_chain(ledger, tx0)
    chain_ok = tx0.txid == records[0].txid and head.tx.txid == records[-1].txid and head.hops == len(records) - 1
    for prev, rec in zip(records, records[1:]):
        chain_ok &= ledger.find_spending_tx(OutPoint(prev.txid, 0)) == rec.tx
    checks["spend-chain"] = chain_ok
    checks["conservation"] = ledger.minted == ledger.utxo_total() + ledger.fees
    result.log.emit("ledger", height=ledger.height, minted=ledger.minted, fees=ledger.fees, utxo_total=ledger.utxo_total())

    result.views = {"honest": p.pos.view(), **result.views}
    expected = sc.expect.get("verdicts", {"honest": {"verdict": "Accepted", "rollback_count": 0}})
    for name, view in result.views.items():
        outcome = verify(ledger, p.store, view, p.epochs[0].key.output, p.params.h0)
        result.verdicts[name] = outcome
        result.log.emit("verdict", view=name, **outcome.to_json())
        want = expected.get(name)
        if want is not None:
            ok = outcome.verdict.value == want["verdict"]
            if "rollback_count" in want:
                ok &= outcome.rollback_count == want["rollback_count"]
            checks[f"verdict-{name}"] = ok
    missing = sorted(set(expected) - set(result.views))
    if missing:
        checks["verdict-views-present"] = False


def write_artifacts(result: RunResult, out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    p = result.pikachu
    files = {"log.jsonl": result.log.dumps()}
    if p is not None:
        files["ledger.jsonl"] = p.ledger.dumps()
        files["store.json"] = p.store.dumps()
        files["pos-honest.jsonl"] = p.pos.dumps()
        for name, view in result.views.items():
            if name != "honest":
                files[f"pos-{name}.jsonl"] = view.dumps()
        if p.epochs:
            meta = {"Q0": p.epochs[0].key.output.hex(), "h0": p.params.h0}
            files["meta.json"] = json.dumps(meta, sort_keys=True, indent=1) + "\n"
    written = []
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        written.append(path)
    return written

