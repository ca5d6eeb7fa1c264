import json

import pytest

from pikachu.cli import main


def run(capsys, *argv):
    try:
        code = main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        code = exc.code
    return code, capsys.readouterr().out


@pytest.fixture(scope="module")
def artifacts(tmp_path_factory):
    out = tmp_path_factory.mktemp("lra")
    assert main(["simulate", "lra_attack", "--out", str(out)]) == 0
    return out


def verify_args(out, chain="pos-honest.jsonl", **swap):
    files = {"ledger": "ledger.jsonl", "store": "store.json", "chain": chain, "meta": "meta.json", **swap}
    args = ["verify"]
    for flag, name in files.items():
        args += [f"--{flag}", out / name]
    return args


def test_simulate_writes_artifacts_and_summary(artifacts, capsys):
    summary = json.loads((artifacts / "log.jsonl").read_text().splitlines()[-1])
    assert summary["event"] == "summary" and summary["ok"] is True
    assert (artifacts / "pos-lra-fork.jsonl").exists()


def test_simulate_prints_the_log(capsys):
    code, out = run(capsys, "simulate", "honest_5")
    assert code == 0
    lines = out.splitlines()
    assert json.loads(lines[-1])["ok"] is True
    assert sum(json.loads(l)["event"] == "checkpoint" for l in lines) == 6


def test_simulate_failed_check_exits_2(tmp_path, capsys):
    scn = {"format": "pikachu-scenario", "version": 1, "seed": 1, "validators": 4, "reconfigurations": 1, "expect": {"checkpoints": 3}}
    path = tmp_path / "bad.scn"
    path.write_text(json.dumps(scn))
    code, out = run(capsys, "simulate", path)
    assert code == 2
    assert json.loads(out.splitlines()[-1])["checks"]["checkpoint-count"] is False


def test_simulate_param_overrides(tmp_path, capsys):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"f": "1/2"}))
    code, _ = run(capsys, "simulate", "honest_5", "--params", params)
    assert code == 3
    code, _ = run(capsys, "simulate", tmp_path / "missing.scn")
    assert code == 3


@pytest.mark.parametrize(
    "chain,code,verdict,rollback",
    [("pos-honest.jsonl", 0, "Accepted", 0), ("pos-lra-fork.jsonl", 1, "RejectedNoValidState", None), ("pos-forged-tip.jsonl", 0, "Accepted", 1)],
)
def test_verify_verdicts(artifacts, capsys, chain, code, verdict, rollback):
    got, out = run(capsys, *verify_args(artifacts, chain))
    doc = json.loads(out)
    assert got == code and doc["verdict"] == verdict
    if rollback is not None:
        assert doc["rollback_count"] == rollback


def test_verify_truncated_ledger_is_an_input_error(artifacts, tmp_path, capsys):
    text = (artifacts / "ledger.jsonl").read_text()
    (tmp_path / "ledger.jsonl").write_text(text[: len(text) // 2])
    code, _ = run(capsys, *verify_args(artifacts, ledger=tmp_path / "ledger.jsonl"))
    assert code == 3


def test_verify_input_errors(artifacts, tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{}")
    assert run(capsys, *verify_args(artifacts, meta=tmp_path / "bad.json"))[0] == 3
    args = verify_args(artifacts)[:-2] + ["--q0", "02" + "00" * 32, "--h0", "12"]
    assert run(capsys, *args)[0] == 3  # not a curve point
    assert run(capsys, *verify_args(artifacts)[:-2])[0] == 3  # no Q0 at all
    assert run(capsys, *verify_args(artifacts, store=tmp_path / "none.json"))[0] == 3


def test_verify_missing_payload_is_data_unavailable(artifacts, tmp_path, capsys):
    store = json.loads((artifacts / "store.json").read_text())
    store["entries"] = {}
    (tmp_path / "store.json").write_text(json.dumps(store))
    code, out = run(capsys, *verify_args(artifacts, store=tmp_path / "store.json"))
    assert code == 4 and json.loads(out)["verdict"] == "DataUnavailable"


def test_dkg_counts_match(capsys):
    code, out = run(capsys, "dkg", "--n", 7, "--t", 4)
    doc = json.loads(out)
    assert code == 0
    assert doc["messages"] == doc["expected_messages"]
    assert doc["messages"]["deal-private"] == 49 and doc["messages"]["deal-broadcast"] == 7
    assert doc["qualified"] == list(range(1, 8))


@pytest.mark.parametrize("n,t", [(3, 2), (1, 1)])
def test_sign_two_broadcasts_per_signer(capsys, n, t):
    code, out = run(capsys, "sign", "--n", n, "--t", t, "--message", "hi")
    doc = json.loads(out)
    assert code == 0 and doc["verified"] is True
    assert len(doc["signers"]) == t and doc["rounds"] == 1
    assert set(doc["broadcasts_per_signer"].values()) == {2}


@pytest.mark.parametrize("argv", [["dkg", "--n", 3, "--t", 4], ["sign", "--n", 0, "--t", 0], ["dkg", "--n", "x", "--t", 1], []])
def test_bad_arguments_exit_3(capsys, argv):
    assert run(capsys, *argv)[0] == 3


def test_init_funding(capsys):
    code, out = run(capsys, "init-funding", "--late", "v03", "--claim", "v02=v01")
    doc = json.loads(out)
    assert code == 0
    assert doc["tx0_inputs"] == ["v01", "v02", "v04", "v05"] and doc["tx0_amount"] == 9800
    assert [r["member"] for r in doc["refunds"]] == ["v03"] and doc["refunds"][0]["result"] == "accepted"
    assert {"member": "v02", "reason": "commitment-mismatch"} in doc["rejected_claims"]
    assert doc["eligible"] == ["v01", "v04", "v05"]


def test_init_funding_bad_input(capsys):
    assert run(capsys, "init-funding", "--late", "v99")[0] == 3
    assert run(capsys, "init-funding", "--claim", "v01")[0] == 3
