import json

import numpy as np
import pytest

from roekuiper import SpaceSpec, realize_window
from roekuiper.cli import run
from roekuiper.roe_operator import permutation_operator


@pytest.fixture
def rd(tmp_path, monkeypatch):
    monkeypatch.setenv("REPORT_DIR", str(tmp_path / "reports"))
    return tmp_path


def report(rd, name):
    return json.loads((rd / "reports" / f"{name}.json").read_text())


def test_space_roundtrip(rd):
    w = rd / "line.json"
    assert run(["space", "gen", "--spec", "line", "--n", "6", "--out", str(w)]) == 0
    assert run(["space", "validate", str(w)]) == 0
    assert report(rd, "space-validate")["verdict"] == "ok"


def test_usage_errors(rd, capsys):
    assert run(["space", "frobnicate"]) == 64
    assert run(["classify", "ciubb", "--space", "x", "--r", "1", "--bogus"]) == 64
    assert run(["space", "gen", "--spec", "nowhere"]) == 64
    assert run([]) == 64


def test_missing_file_is_inconclusive(rd):
    assert run(["space", "validate", str(rd / "absent.json")]) == 2


def test_classify_exit_codes(rd):
    fib, exp = rd / "fib.json", rd / "exp.json"
    run(["space", "gen", "--spec", "fibered", "--n", "3", "--fibers", "3", "--out", str(fib)])
    run(["space", "gen", "--spec", "expblocks", "--blocks", "4", "--out", str(exp)])
    assert run(["classify", "piubs", "--space", str(fib), "--r", "1"]) == 0
    assert run(["classify", "ciubb", "--space", str(exp), "--r", "2"]) == 1
    rep = report(rd, "classify-ciubb")
    assert rep["verdict"] == "violation"
    assert set(rep["witnesses"]["witness"]) >= {"center", "cardinality"}
    assert run(["classify", "paradoxical", "--space", str(exp)]) == 0
    assert run(["classify", "paradoxical", "--space", str(fib)]) == 2


def test_op_pipeline(rd):
    w = rd / "line.json"
    op = rd / "op.json"
    run(["space", "gen", "--spec", "line", "--n", "8", "--out", str(w)])
    assert run(["op", "gen", "--space", str(w), "--kind", "band-random", "--prop", "2",
                "--diag-shift", "6", "--seed", "3", "--out", str(op)]) == 0
    assert run(["op", "check", "--op", str(op), "--other", str(op), "--subadditivity"]) == 0
    assert run(["op", "retract", "--op", str(op)]) == 0
    rep = report(rd, "op-retract")
    assert rep["result"]["unitarity_residual"] < 1e-10


def test_obstruct_commands(rd):
    assert run(["obstruct", "index", "--alpha", "shift+1"]) == 0
    assert report(rd, "obstruct-index")["result"]["value"] == -1
    loop = rd / "loop.json"
    assert run(["obstruct", "loop", "--k", "2", "--out", str(loop)]) == 0
    assert run(["obstruct", "winding", "--loop", str(loop)]) == 0
    assert report(rd, "obstruct-winding")["result"]["value"] == 2


def test_contract_small_fixture(rd):
    w = realize_window(SpaceSpec.fibered_line(), {"n": 6, "fibers": 7})
    cyc = [-3, -1, 1, 3, 2, 0, -2]
    V = permutation_operator(w, {(cyc[k], 0): (cyc[(k + 1) % 7], 0) for k in range(7)})
    (rd / "w.json").write_text(json.dumps(w.to_json()))
    (rd / "v.json").write_text(json.dumps([V.to_json()]))
    args = ["contract", "--space", str(rd / "w.json"), "--vertices", str(rd / "v.json"),
            "--samples", "3"]
    assert run(args) == 0
    first = (rd / "reports" / "contract.json").read_bytes()
    rep = json.loads(first)
    assert rep["verdict"] == "ok"
    assert rep["result"]["interior_residual"] <= 1e-6
    assert run(args) == 0
    assert (rd / "reports" / "contract.json").read_bytes() == first
    assert run(args[:-2] + ["--r", "2"]) == 64


def test_stdout_when_no_report_dir(monkeypatch, capsys):
    monkeypatch.delenv("REPORT_DIR", raising=False)
    assert run(["obstruct", "index", "--windows", "16,32"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["command"] == "obstruct index"
    assert np.isclose(out["result"]["value"], -1)
