import json
import subprocess
import sys

import pytest

from aam.cli import main

from conftest import CORPUS


def corpus(name):
    for sub in ("pure", "effects"):
        p = CORPUS / sub / f"{name}.scm"
        if p.exists():
            return str(p)
    raise KeyError(name)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_cek_mode_prints_result(capsys):
    code, out, _ = run(capsys, "--mode", "cek", "--fuel", "1000", corpus("id-id"))
    assert code == 0
    assert out == "result: (λ (y) y)\n"


def test_timeout_and_stuck_are_successful_outcomes(capsys):
    assert run(capsys, "--mode", "ref", "--fuel", "50", corpus("omega"))[:2] == (0, "result: timeout\n")
    assert run(capsys, "--mode", "cesk", corpus("stuck-late"))[:2] == (0, "result: stuck\n")


def test_analyze_writes_json_without_final_for_omega(capsys, tmp_path):
    out_json = tmp_path / "out.json"
    code, out, _ = run(
        capsys, "--mode", "analyze", "--policy", "0cfa", "--gc", "free", corpus("omega"), "--json", str(out_json)
    )
    assert code == 0
    assert out.startswith("nodes: ")
    doc = json.loads(out_json.read_text(encoding="utf-8"))
    assert not any(n["final"] for n in doc["nodes"])
    assert doc["stats"]["final_nodes"] == 0


def test_ref_mode_rejects_set(capsys):
    code, out, err = run(capsys, "--mode", "ref", corpus("set-returns-old"))
    assert code == 1
    assert out == ""
    assert "set!" in err


def test_gc_free_is_a_usage_error_for_store_less_modes(capsys):
    assert run(capsys, "--mode", "cek", "--gc", "free", corpus("id-id"))[0] == 1
    assert run(capsys, "--mode", "cek", "--gc", "none", corpus("id-id"))[0] == 0


def test_parse_and_closedness_errors(capsys, tmp_path):
    bad = tmp_path / "bad.scm"
    bad.write_text("(λ (x) x", encoding="utf-8")
    code, _, err = run(capsys, str(bad))
    assert code == 1 and "1:1" in err
    bad.write_text("(λ (x) y)", encoding="utf-8")
    code, _, err = run(capsys, str(bad))
    assert code == 1 and "y@2" in err
    assert run(capsys, str(tmp_path / "missing.scm"))[0] == 1


def test_bad_flags(capsys):
    assert run(capsys, "--mode", "nope", corpus("id-id"))[0] == 1
    assert run(capsys, "--fuel", "0", corpus("id-id"))[0] == 1
    assert run(capsys, "--policy", "kcfa", "--k", "-1", corpus("id-id"))[0] == 1
    assert run(capsys, "--mode", "cek", "--dot", "x.dot", corpus("id-id"))[0] == 1


def test_node_cap_exit_status(capsys, monkeypatch):
    monkeypatch.setenv("AAM_NODE_CAP", "5")
    code, _, err = run(capsys, corpus("omega"))
    assert code == 2
    assert "node cap" in err


def test_kcfa_and_dot_output(capsys, tmp_path):
    dot = tmp_path / "g.dot"
    code, out, _ = run(capsys, "--policy", "kcfa", "--k", "1", "--dot", str(dot), corpus("two-call-site-id"))
    assert code == 0
    assert dot.read_text(encoding="utf-8").startswith("digraph aam {")


def test_trace_prints_states(capsys):
    code, out, _ = run(capsys, "--mode", "cesk", "--gc", "none", "--trace", corpus("id-id"))
    lines = out.splitlines()
    assert code == 0
    assert len(lines) == 6  # five states and the result
    assert lines[0].startswith("(cesk ")


def test_output_is_reproducible(tmp_path):
    outs = []
    for i in range(2):
        j = tmp_path / f"{i}.json"
        p = subprocess.run(
            [sys.executable, "-m", "aam.cli", "--policy", "kcfa", "--jobs", str(1 + 2 * i), "--json", str(j), corpus("callcc-reenter-once")],
            capture_output=True,
            check=True,
        )
        outs.append((p.stdout, j.read_bytes()))
    assert outs[0] == outs[1]
