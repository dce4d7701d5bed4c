from __future__ import annotations

import json
import math

import pytest

from kashin.cli import main
from kashin.matrices import matrix_from_dict


def _gen(tmp_path, k=4, seed=1, name="m.json"):
    path = tmp_path / name
    assert main(["gen", "--k", str(k), "--seed", str(seed), "--out", str(path)]) == 0
    return path


def test_gen_round_trip(tmp_path):
    path = _gen(tmp_path)
    doc = json.loads(path.read_text())
    assert doc["k"] == 4 and doc["run_config"]["command"] == "gen"
    sys_ = matrix_from_dict(doc)
    assert sys_.b.k == 4
    first = path.read_bytes()
    assert _gen(tmp_path).read_bytes() == first


def test_gen_rejects_bad_k(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--k", "0"])
    assert exc.value.code == 2


def test_missing_input_is_io_error(tmp_path):
    assert main(["certify", "--in", str(tmp_path / "nope.json"), "--threshold", "2"]) == 2


def test_certify_exit_codes_and_verify(tmp_path):
    m = _gen(tmp_path)
    cert = tmp_path / "c.json"
    assert main(["certify", "--in", str(m), "--threshold", "100", "--out", str(cert)]) == 0
    assert main(["certify", "--in", str(m), "--threshold", "1.0", "--out", str(tmp_path / "f.json")]) == 1
    ver = tmp_path / "v.json"
    assert main(["verify", "--in", str(m), "--cert", str(cert), "--out", str(ver)]) == 0
    assert json.loads(ver.read_text())["valid"]
    other = _gen(tmp_path, seed=2, name="o.json")
    assert main(["verify", "--in", str(other), "--cert", str(cert), "--out", str(ver)]) == 1


def test_budget_exit_code(tmp_path):
    m = _gen(tmp_path, k=30)
    assert main(["certify", "--in", str(m), "--threshold", "2", "--method", "delta"]) == 3


def test_oracle_agrees_with_certificate(tmp_path):
    m = _gen(tmp_path, k=3)
    cert, orc = tmp_path / "c.json", tmp_path / "o.json"
    main(["certify", "--in", str(m), "--threshold", "100", "--out", str(cert)])
    assert main(["oracle", "--in", str(m), "--out", str(orc)]) == 0
    reports = json.loads(orc.read_text())["reports"]
    best = max(float(r["value"]) for r in reports.values())
    assert best == pytest.approx(float(json.loads(cert.read_text())["certificate"]["constant"]), abs=1e-9)


def test_walsh_command(tmp_path):
    out = tmp_path / "w.json"
    assert main(["walsh", "--t", "2", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert float(doc["ratio"]) == pytest.approx(math.sqrt(2), abs=1e-12)
    assert main(["walsh", "--t", "2", "--threshold", "1.4", "--out", str(out)]) == 1
    assert main(["walsh", "--t", "3"]) == 2


def test_mc_writes_rows_and_header(tmp_path):
    out = tmp_path / "mc.csv"
    assert main(["mc", "--k-list", "2,3", "--samples", "7", "--threshold", "1.8", "--seed", "3",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 1 + 14
    header = json.loads((tmp_path / "mc.header.json").read_text())
    assert header["columns"] == lines[0].split(",")
    assert main(["replay", str(tmp_path / "mc.header.json")]) == 0


def test_checks_tail_rearrangement_strict(tmp_path):
    out = tmp_path / "t.json"
    assert main(["checks", "tail-rearrangement", "--sweep", "10000", "--seed", "1", "--strict",
                 "--out", str(out)]) == 0
    assert json.loads(out.read_text())["pass"]


@pytest.mark.parametrize("argv", [
    ["gen", "--k", "5", "--seed", "7"],
    ["search", "--k", "3", "--steps", "20", "--seed", "4", "--mode", "anneal"],
    ["walsh", "--t", "2"],
    ["checks", "khinchine", "--sweep", "50", "--seed", "2"],
    ["checks", "gauge", "--k", "6", "--samples", "200", "--seed", "2"],
    ["mc", "--k-list", "3", "--samples", "4", "--threshold", "2", "--format", "json"],
])
def test_artifacts_replay_identically(tmp_path, argv):
    out = tmp_path / "a.json"
    assert main(argv + ["--out", str(out)]) in (0, 1)
    first = out.read_bytes()
    main(argv + ["--out", str(out)])
    assert out.read_bytes() == first
    assert main(["replay", str(out)]) == 0


def test_replay_detects_tampering(tmp_path):
    out = tmp_path / "a.json"
    main(["walsh", "--t", "2", "--out", str(out)])
    doc = json.loads(out.read_text())
    doc["ratio"] = "1"
    out.write_text(json.dumps(doc))
    assert main(["replay", str(out)]) == 1


def test_timing_replay_ignores_ms(tmp_path):
    m = _gen(tmp_path, k=3)
    out = tmp_path / "c.json"
    main(["certify", "--in", str(m), "--threshold", "100", "--timing", "--out", str(out)])
    assert json.loads(out.read_text())["certificate"]["ms"] is not None
    assert main(["replay", str(out)]) == 0
