import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from peeroc.cli import main


def test_verify_writes_tables(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), "verify", "--method", "AP4o43bdf,AP3o32f",
                 "--samples", "720"]) == 0
    rows = list(csv.DictReader(open(tmp_path / "verify_standard.csv")))
    assert [r["triplet"] for r in rows] == ["AP4o43bdf", "AP3o32f"]
    assert (tmp_path / "verify_boundary.csv").exists()
    assert "all conditions pass" in (tmp_path / "verify_checklist.txt").read_text()
    man = json.loads((tmp_path / "manifest_verify.json").read_text())
    assert man["command"] == "verify" and man["methods"] == ["AP4o43bdf", "AP3o32f"]
    assert "[PASS]" in capsys.readouterr().out


def test_verify_failure_exit_code(tmp_path):
    # an impossible tolerance makes the floating-point triplets fail
    assert main(["--out-dir", str(tmp_path), "--tol", "1e-30", "verify", "--method", "AP4o43sil",
                 "--samples", "360"]) == 1


def test_stability_json_and_locus(tmp_path, capsys):
    locus = tmp_path / "locus.csv"
    assert main(["--out-dir", str(tmp_path), "--format", "json", "stability", "--method",
                 "AP4o43dif", "--samples", "3600", "--locus", str(locus)]) == 0
    assert "alpha = 84.0" in capsys.readouterr().out
    rows = json.loads((tmp_path / "stability.json").read_text())
    assert rows[0]["triplet"] == "AP4o43dif"
    assert len(locus.read_text().splitlines()) == 1 + 3600 * 4


def test_solve_dump(tmp_path):
    dump = tmp_path / "s.csv"
    assert main(["--out-dir", str(tmp_path), "solve", "--problem", "wave", "--method",
                 "AP4o43die", "--steps", "40", "--dump", str(dump)]) == 0
    assert len(dump.read_text().splitlines()) == 1 + 40 * 4 + 1


def test_solver_failure_exit_code(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), "solve", "--problem", "motion", "--method",
                 "AP3o32f", "--steps", "10"]) == 2
    assert "solver failure" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["verify", "--method", "AP9"],
    ["solve", "--problem", "pendulum", "--method", "AP3o32f", "--steps", "20"],
    ["solve", "--problem", "wave", "--method", "AP3o32f", "--steps", "1"],
    ["converge", "--problem", "wave", "--steps", "20,30"],
    ["converge", "--problem", "wave", "--steps", "a,b"],
    ["stability", "--method", "all", "--locus", "x.csv"],
    ["frobnicate"],
    [],
])
def test_usage_errors(argv, tmp_path):
    assert main(["--out-dir", str(tmp_path), *argv]) == 3


def test_converge_and_replay_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["--out-dir", str(a), "converge", "--problem", "wave", "--methods",
            "AP4o43die,AP4o43bdf", "--steps", "20,40,80"]
    assert main(argv) == 0
    files = ["converge_wave.csv", "converge_wave_state.svg", "converge_wave_adjoint.svg"]
    first = {f: (a / f).read_bytes() for f in files}
    rows = list(csv.DictReader(open(a / "converge_wave.csv")))
    assert len(rows) == 6 and rows[0]["state_order"] == "nan"
    for f in files[1:]:
        ET.fromstring(first[f])
    # replay the manifest into a different directory
    man = json.loads((a / "manifest_converge.json").read_text())
    man["argv"][1] = str(b)
    (tmp_path / "m.json").write_text(json.dumps(man))
    assert main(["replay", str(tmp_path / "m.json")]) == 0
    for f in files:
        assert (b / f).read_bytes() == first[f]


def test_replay_bad_manifest(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["replay", str(bad)]) == 3
    assert main(["replay", str(tmp_path / "missing.json")]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "peeroc", "--out-dir", str(tmp_path), "stability",
                           "--method", "AP4o43bdf", "--samples", "720"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "AP4o43bdf: alpha" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "peeroc", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 3
