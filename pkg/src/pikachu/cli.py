"""pikachu command line: simulate, dkg, sign, verify, init-funding."""

from __future__ import annotations

import argparse
import json
import sys
import time
from collections import Counter
from pathlib import Path

from .curve import InvalidPointError, Point
from .dkg import DkgError
from .frost import FrostError
from .ledger import LedgerLoadError, SimChain
from .pos import ChainView, ContentStore, PosChain, PosError
from .protocol import EventLog, ParameterError, Pikachu, ProtocolError, ProtocolParams
from .rounds import Clock, SigningGroup, dkg_message_count, run_dkg, run_signing
from .scenario import ScenarioError, bundled, load_scenario, run_scenario, write_artifacts
from .taproot import tweak_pubkey, tweak_signature, verify_key_path
from .verifier import DataUnavailable, NoValidInitialTx, StructuralError, verify

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_VIOLATION = 2
EXIT_INPUT = 3
EXIT_UNAVAILABLE = 4


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage mistakes are input errors, not protocol violations (argparse's 2)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _emit(doc) -> None:
    print(json.dumps(doc, sort_keys=True, indent=1))


def _load_params(path, base: ProtocolParams | None = None) -> ProtocolParams:
    base_doc = (base or ProtocolParams()).to_json()
    if path is None:
        return ProtocolParams.from_json(base_doc)
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{path}: expected a JSON object of parameters")
    return ProtocolParams.from_json({**base_doc, **doc})


def _ids(n: int) -> list[str]:
    return [f"v{k:02d}" for k in range(1, n + 1)]


def _check_nt(n: int, t: int) -> None:
    if n < 1 or not 1 <= t <= n:
        raise InputError(f"need 1 <= t <= n, got n={n} t={t}")


# -- subcommands ------------------------------------------------------------


def cmd_simulate(args) -> int:
    target = Path(args.scenario)
    if not target.exists() and bundled(args.scenario).exists():
        target = bundled(args.scenario)
    sc = load_scenario(target)
    if args.seed is not None:
        sc.seed = args.seed
    if args.params is not None:
        sc.params = _load_params(args.params, sc.params)
    result = run_scenario(sc)
    if args.out:
        write_artifacts(result, Path(args.out))
        _emit(result.log.events[-1])
    else:
        sys.stdout.write(result.log.dumps())
    return EXIT_OK if result.ok else EXIT_VIOLATION


def cmd_dkg(args) -> int:
    _check_nt(args.n, args.t)
    clock = Clock(PosChain(b"pikachu-dkg/%d" % args.seed))
    started = time.perf_counter()
    outcome = run_dkg(clock, _ids(args.n), args.t, "dkg/cli", args.seed)
    elapsed = time.perf_counter() - started
    expected = dkg_message_count(args.n, complaint_senders=args.n)
    counts = {k: outcome.counts.get(k, 0) for k in expected}
    _emit(
        {
            "n": args.n,
            "t": args.t,
            "group_pubkey": outcome.group_pubkey.hex(),
            "qualified": list(outcome.qualified),
            "messages": counts,
            "expected_messages": expected,
            "blocks": outcome.finished_at - outcome.started_at,
            "seconds": round(elapsed, 3),
        }
    )
    return EXIT_OK if counts == expected else EXIT_VIOLATION


def cmd_sign(args) -> int:
    _check_nt(args.n, args.t)
    ids = _ids(args.n)
    clock = Clock(PosChain(b"pikachu-sign/%d" % args.seed))
    outcome = run_dkg(clock, ids, args.t, "dkg/cli", args.seed)
    group = SigningGroup.from_dkg(ids, args.t, outcome, "nonces/cli", args.seed, preprocess_count=1)
    message = args.message.encode()
    key = tweak_pubkey(group.group_key, b"")
    started = time.perf_counter()
    counts = Counter()
    group.publish_nonces(clock, counts=counts)
    signing = run_signing(clock, group, message, key.output, clock.pos.beacon(clock.height), "sign/cli", counts=counts)
    elapsed = time.perf_counter() - started
    sig = tweak_signature(signing.signature, message, key)
    ok = verify_key_path(key.output, message, sig)
    signers = signing.attempts[-1]
    per_signer = {ids[i - 1]: signing.broadcasts_by(i) for i in signers}
    _emit(
        {
            "n": args.n,
            "t": args.t,
            "message": args.message,
            "group_pubkey": group.group_key.hex(),
            "Q": key.output.hex(),
            "signature": sig.to_bytes().hex(),
            "verified": ok,
            "signers": [ids[i - 1] for i in signers],
            "broadcasts_per_signer": per_signer,
            "rounds": signing.rounds,
            "seconds": round(elapsed, 3),
        }
    )
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_verify(args) -> int:
    q0, h0 = args.q0, args.h0
    if args.meta is not None:
        try:
            meta = json.loads(Path(args.meta).read_text())
            q0 = q0 or meta["Q0"]
            h0 = meta["h0"] if h0 is None else h0
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"{args.meta}: {exc}") from exc
    if q0 is None or h0 is None:
        raise InputError("need Q0 and h0 (flags or --meta)")
    try:
        Q0 = Point.fromhex(q0)
        ledger = SimChain.loads(Path(args.ledger).read_text())
        store = ContentStore.loads(Path(args.store).read_text())
        view = ChainView.loads(Path(args.chain).read_text())
    except (OSError, ValueError, InvalidPointError) as exc:
        raise InputError(str(exc)) from exc
    try:
        outcome = verify(ledger, store, view, Q0, h0)
    except DataUnavailable as exc:
        _emit({"verdict": "DataUnavailable", "error": str(exc)})
        return EXIT_UNAVAILABLE
    except (NoValidInitialTx, StructuralError) as exc:
        _emit({"verdict": "RejectedNoValidState", "error": str(exc)})
        return EXIT_REJECTED
    _emit(outcome.to_json())
    return EXIT_OK if outcome.accepted else EXIT_REJECTED


def cmd_init_funding(args) -> int:
    params = _load_params(args.params)
    ids = _ids(args.n)
    for who in list(args.late) + list(args.absent):
        if who not in ids:
            raise InputError(f"unknown member {who}")
    claims = {}
    for claim in args.claim:
        member, _, victim = claim.partition("=")
        if member not in ids or victim not in ids or member == victim:
            raise InputError(f"bad claim {claim!r}, expected MEMBER=VICTIM")
        claims[member] = victim
    log = EventLog()
    clock = Clock(PosChain(b"pikachu-init/%d" % args.seed), SimChain())
    p = Pikachu(params, clock, ContentStore(), args.seed, log)
    report = p.run_init_protocol(ids, tuple(args.late), tuple(args.absent), claims)
    tx0 = report.record.tx
    _emit(
        {
            "Q0": report.record.Q.hex(),
            "tx0": report.record.txid.hex(),
            "tx0_inputs": [m for _, m in report.inputs],
            "tx0_amount": tx0.outputs[0].amount,
            "eligible": report.eligible,
            "rejected_claims": report.rejected_claims,
            "refunds": report.refunds,
        }
    )
    return EXIT_OK


# -- entry point ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pikachu", description="PoS checkpointing on a simulated PoW ledger")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario file")
    sim.add_argument("scenario", help="path to a .scn file, or a bundled name (honest_5, lra_attack)")
    sim.add_argument("--seed", type=int, help="override the scenario seed")
    sim.add_argument("--params", help="JSON file of parameter overrides")
    sim.add_argument("--out", help="directory for the log and ledger/store/chain dumps")
    sim.set_defaults(func=cmd_simulate)

    dkg = sub.add_parser("dkg", help="run one key generation")
    dkg.add_argument("--n", type=int, required=True)
    dkg.add_argument("--t", type=int, required=True)
    dkg.add_argument("--seed", type=int, default=0)
    dkg.set_defaults(func=cmd_dkg)

    sign = sub.add_parser("sign", help="key generation plus one threshold signature")
    sign.add_argument("--n", type=int, required=True)
    sign.add_argument("--t", type=int, required=True)
    sign.add_argument("--message", default="hello")
    sign.add_argument("--seed", type=int, default=0)
    sign.set_defaults(func=cmd_sign)

    ver = sub.add_parser("verify", help="verify dumped artifacts")
    ver.add_argument("--ledger", required=True)
    ver.add_argument("--store", required=True)
    ver.add_argument("--chain", required=True, help="served PoS chain dump")
    ver.add_argument("--q0", help="initial taproot key, hex")
    ver.add_argument("--h0", type=int, help="funding deadline height")
    ver.add_argument("--meta", help="meta.json written by simulate --out")
    ver.set_defaults(func=cmd_verify)

    init = sub.add_parser("init-funding", help="run the funding protocol for Q_0")
    init.add_argument("--n", type=int, default=5)
    init.add_argument("--late", nargs="*", default=[], help="members funding after h0")
    init.add_argument("--absent", nargs="*", default=[], help="members never funding")
    init.add_argument("--claim", action="append", default=[], help="MEMBER=VICTIM impersonation attempt")
    init.add_argument("--seed", type=int, default=0)
    init.add_argument("--params", help="JSON file of parameter overrides")
    init.set_defaults(func=cmd_init_funding)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ScenarioError, ParameterError, LedgerLoadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ProtocolError, DkgError, FrostError, PosError) as exc:
        print(f"protocol failure: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
