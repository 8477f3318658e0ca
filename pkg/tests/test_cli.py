import json

import pytest

from homvote.cli import main
from homvote.config import fixture_text


@pytest.fixture
def spec_file(tmp_path):
    path = tmp_path / "presidential.json"
    path.write_text(fixture_text("presidential"))
    return path


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_full_lifecycle(tmp_path, spec_file, capsys, monkeypatch):
    monkeypatch.setenv("ELECTION_DIR", str(tmp_path / "e"))
    assert run(capsys, "init", str(spec_file))[0] == 0
    code, out, _ = run(capsys, "ceremony")
    assert code == 0 and out.count("shard_") == 5
    code, out, _ = run(capsys, "simulate", "--voters", "100", "--workers", "8", "--duplicates", "5",
                       "--tamper", "4", "--seed", "9")
    assert code == 0
    assert "accepted: 100" in out
    assert "rejected AlreadyVoted: 5" in out and "rejected ProofInvalid: 4" in out

    code, _, err = run(capsys, "decrypt")
    assert code == 1 and "LifecycleError" in err
    assert run(capsys, "close")[0] == 0
    shards = sorted(str(p) for p in (tmp_path / "e" / "shards").glob("*.json"))
    code, _, err = run(capsys, "reconstruct", "--shards", *shards[:2])
    assert code == 1 and "InsufficientShards" in err
    assert run(capsys, "reconstruct", "--shards", *shards[2:])[0] == 0
    assert run(capsys, "decrypt", "--partitions", "2")[0] == 0
    assert run(capsys, "report", "--format", "json")[0] == 0
    code, out, _ = run(capsys, "audit")
    assert code == 0 and "cross-check: all equal" in out
    assert "ledger=100 voted=100 stored=100" in out
    report = json.loads((tmp_path / "e" / "reports" / "results.json").read_text())
    assert sum(t["ballot_count"] for t in report["tallies"]) == 100


def test_init_refusals(tmp_path, spec_file, capsys):
    target = str(tmp_path / "e")
    assert run(capsys, "--dir", target, "init", str(spec_file))[0] == 0
    code, _, err = run(capsys, "--dir", target, "init", str(spec_file))
    assert code == 1 and "--force" in err
    assert run(capsys, "--dir", target, "init", "--force", str(spec_file))[0] == 0

    bad = json.loads(fixture_text("presidential"))
    bad["contests"][0]["coalitions"] = [["PAN", "PRI"], ["PRI", "PRD"]]
    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps(bad, indent=2))
    code, _, err = run(capsys, "--dir", str(tmp_path / "f"), "init", str(bad_path))
    assert code == 1 and "two coalitions" in err and "line" in err


def test_init_with_registry(tmp_path, spec_file, capsys):
    voters = tmp_path / "voters.csv"
    voters.write_text("voter_id,state,modality\nA,CDMX,remote\nB,JAL,in_person\n")
    code, out, _ = run(capsys, "--dir", str(tmp_path / "e"), "init", str(spec_file), "--registry", str(voters))
    assert code == 0 and "imported 2 voters" in out


def test_ceremony_threshold_options(tmp_path, spec_file, capsys):
    d = str(tmp_path / "e")
    run(capsys, "--dir", d, "init", str(spec_file))
    code, out, _ = run(capsys, "--dir", d, "ceremony", "--shards", "7", "--threshold", "4")
    assert code == 0 and out.count("shard_") == 7
    d2 = str(tmp_path / "e2")
    run(capsys, "--dir", d2, "init", str(spec_file))
    code, _, err = run(capsys, "--dir", d2, "ceremony", "--shards", "3", "--threshold", "4")
    assert code == 1 and "InvalidThreshold" in err


def test_simulate_zero_voters(tmp_path, spec_file, capsys):
    d = str(tmp_path / "e")
    run(capsys, "--dir", d, "init", str(spec_file))
    run(capsys, "--dir", d, "ceremony")
    code, out, _ = run(capsys, "--dir", d, "simulate", "--voters", "0")
    assert code == 0 and "accepted: 0" in out


def test_usage_errors(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("ELECTION_DIR", raising=False)
    assert run(capsys, "close")[0] == 2
    with pytest.raises(SystemExit) as exc:
        main(["bench", "--contests", "zero"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_bench_command(capsys):
    code, out, _ = run(capsys, "bench", "--contests", "1..2", "--ballots", "3", "--warmup", "1", "--bits", "512")
    assert code == 0
    assert "512-bit keys" in out and "serial slope" in out
    assert out.count("serial ") >= 2 and out.count("parallel ") >= 2
