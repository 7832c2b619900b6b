import csv
import io
import json
from pathlib import Path

import pytest

from lorentz_finsler import cli

MODELS = Path(__file__).resolve().parents[1] / "models"

COMMANDS = {
    "validate": ["validate", "{m}/minkowski2.model", "--samples", "50"],
    "identities": ["identities", "{m}/warped.model", "--samples", "20"],
    "geodesic": ["geodesic", "{m}/warped.model", "--from", "0,0", "--vel", "1.2,0.3", "--tspan=-1,2", "--points", "7"],
    "busemann": ["busemann", "{m}/minkowski2.model", "--grid", "13", "--half-width", "0.3"],
    "split": ["split", "{m}/product.model", "--no-berwald"],
    "compare": ["compare", "{m}/minkowski2.model", "--directions", "3", "--times", "6"],
}


def run(argv):
    buf = io.StringIO()
    code = cli.main(argv, stream=buf)
    return code, buf.getvalue()


def snapshot(out: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


@pytest.mark.parametrize("name", list(COMMANDS))
def test_seeded_runs_are_byte_identical(name, tmp_path):
    argv = [a.format(m=MODELS) for a in COMMANDS[name]]
    results = []
    for k in (1, 2):
        out = tmp_path / f"run{k}"
        code, text = run(argv + ["--out", str(out)])
        results.append((code, text, snapshot(out)))
    assert results[0][0] == 0, results[0][1]
    assert results[0] == results[1]
    files = results[0][2]
    assert f"{name}.json" in files
    doc = json.loads(files[f"{name}.json"])
    assert doc["command"] == name and doc["status"] == "pass" and doc["exit_code"] == 0


def test_no_files_without_out(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, text = run(["validate", str(MODELS / "minkowski2.model"), "--samples", "10"])
    assert code == 0 and "homogeneity_L" in text
    assert list(tmp_path.iterdir()) == []


def test_identities_report_has_bochner_terms(tmp_path):
    code, _ = run(["identities", str(MODELS / "minkowski2.model"), "--samples", "10", "--out", str(tmp_path)])
    assert code == 0
    with open(tmp_path / "identities.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    boch = [r for r in rows if r["check"] == "bochner"]
    assert len(boch) == 1
    assert any(k.startswith("term_") for k in rows[0])


def test_wrong_signature_exits_1(tmp_path):
    f = tmp_path / "bad.model"
    f.write_text("[model]\nn = 2\nlagrangian = (v1^2 + v2^2)/2\n")
    code, text = run(["validate", str(f), "--samples", "10", "--out", str(tmp_path / "out")])
    assert code == 1
    assert "SignatureError" in text
    doc = json.loads((tmp_path / "out" / "validate.json").read_text())
    assert doc["status"] == "fail" and doc["exit_code"] == 1


def test_malformed_model_exits_2_with_offset(tmp_path, capsys):
    f = tmp_path / "bad.model"
    f.write_text("[model]\nn = 2\nlagrangian = (-v1^2 + * v2^2)/2\n")
    code, _ = run(["validate", str(f)])
    assert code == 2
    err = capsys.readouterr().err
    assert "lagrangian" in err and "offset: " in err


def test_out_of_range_parameter_exits_2(capsys):
    code, _ = run(["compare", str(MODELS / "minkowski2.model"), "--N", "1.5"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_missing_line_exits_2(capsys):
    code, _ = run(["split", str(MODELS / "warped.model")])
    assert code == 2
    assert "[line]" in capsys.readouterr().err


def test_bad_flags_exit_2():
    with pytest.raises(SystemExit) as info:
        cli.main(["geodesic", str(MODELS / "warped.model")])
    assert info.value.code == 2
    code, _ = run(["geodesic", str(MODELS / "warped.model"), "--from", "0", "--vel", "1,0"])
    assert code == 2
