import json
import math

import pytest

from smdpopt import cli
from smdpopt.model import SmdpModel


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_validate(capsys, data, tmp_path):
    assert run(capsys, "validate", data / "two_state.json")[0] == 0
    assert run(capsys, "validate", data / "parabola.json")[0] == 0
    bad = json.loads((data / "two_state.json").read_text())
    bad["p"][0]["a"] = [0.3, 0.6]
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    code, _, err = run(capsys, "validate", tmp_path / "bad.json")
    assert code == 1 and "BPC condition 1" in err and "state 1, decision a" in err
    assert run(capsys, "validate", tmp_path / "missing.json")[0] == 2
    (tmp_path / "junk.json").write_text("{not json")
    assert run(capsys, "validate", tmp_path / "junk.json")[0] == 2


def test_validate_condition4(capsys, tmp_path):
    doc = {"states": 2, "decision_spaces": [{"type": "finite", "points": [
        {"label": "stay", "value": 0}, {"label": "move", "value": 1}]}] * 2,
        "p": [{"stay": [1, 0], "move": [0, 1]}, {"stay": [0, 1], "move": [1, 0]}],
        "T": [{"stay": 1, "move": 1}] * 2, "d": [{"stay": 1, "move": 0}] * 2}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    code, out, _ = run(capsys, "validate", tmp_path / "m.json")
    assert code == 1
    assert "condition 4" in out and '["stay", "stay"]' in out


def test_eval(capsys, data, tmp_path):
    code, out, _ = run(capsys, "eval", data / "two_state.json", data / "two_state_pure.json")
    doc = json.loads(out)
    assert code == 0
    assert all(math.isclose(r["I"], 37 / 19, rel_tol=1e-12) for r in doc["routes"])
    code, out, _ = run(capsys, "eval", data / "choice.json", data / "choice_mixed.json")
    assert code == 0 and json.loads(out)["relative_difference"] <= 1e-9
    (tmp_path / "s.json").write_text(json.dumps({"mixed": [[{"point": "a", "weight": 0.7}],
                                                           [{"point": "b", "weight": 1}]]}))
    assert run(capsys, "eval", data / "two_state.json", tmp_path / "s.json")[0] == 1


def test_eval_detects_route_disagreement(capsys, data, monkeypatch):
    original = SmdpModel.characteristics

    def skewed(self, i, us):
        rows, ts, ds = original(self, i, us)
        return rows, ts, ds + 1.0

    monkeypatch.setattr(SmdpModel, "characteristics", skewed)
    code, _, err = run(capsys, "eval", data / "choice.json", data / "choice_mixed.json")
    assert code == 3 and "routes disagree" in err


def test_testfn_csv(capsys, data):
    code, out, _ = run(capsys, "testfn", data / "choice.json")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "u_1,u_2,u_3,A,B,C" and len(lines) == 7
    code, out, _ = run(capsys, "testfn", data / "parabola.json", "--grid", "10")
    lines = out.splitlines()
    assert lines[0] == "u_1,u_2,A,B,C" and len(lines) == 21
    u1, u2, A, B, C = lines[4].split(",")
    assert float(C) == float(A) / float(B)


def test_testfn_marks_failures(capsys, tmp_path):
    doc = {"states": 1, "decision_spaces": [{"type": "interval", "low": 0, "high": 1}],
           "p": [["1"]], "T": ["1"], "d": ["1/(u - 0.5)"]}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    code, out, err = run(capsys, "testfn", tmp_path / "m.json", "--grid", "3")
    assert code == 0
    assert out.splitlines()[2] == "0.5,,,"
    assert "1 grid point(s)" in err


def test_testfn_two_axes(capsys, tmp_path):
    doc = {"states": 2, "decision_spaces": [{"type": "interval", "low": 0, "high": 1}] * 2,
           "p": [["0.5", "0.5"]] * 2, "T": ["1", "1"], "d": ["u", "u"]}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    code, out, _ = run(capsys, "testfn", tmp_path / "m.json", "--grid", "10,10")
    assert code == 0 and len(out.splitlines()) == 101
    assert run(capsys, "testfn", tmp_path / "m.json", "--grid", "10,10,10")[0] == 2


def test_optimize(capsys, data):
    code, out, _ = run(capsys, "optimize", data / "choice.json")
    assert code == 0 and json.loads(out)["kind"] == "attained"
    code, out, _ = run(capsys, "optimize", data / "open_linear.json")
    assert code == 0 and json.loads(out)["kind"] == "eps_optimal"
    code, out, _ = run(capsys, "optimize", data / "inv_u.json")
    assert code == 4 and json.loads(out)["kind"] == "unbounded"
    code, out, _ = run(capsys, "optimize", data / "inv_u.json", "--sense", "min")
    assert code == 0 and json.loads(out)["value"] == 1


def test_optimize_overrides(capsys, data, tmp_path):
    doc = json.loads((data / "parabola.json").read_text())
    doc["optimizer"] = {"initial_points": 16, "multistart": 3}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    _, out, _ = run(capsys, "optimize", tmp_path / "m.json", "--set", "multistart=2")
    config = json.loads(out)["manifest"]["config"]
    assert config["initial_points"] == 16 and config["multistart"] == 2
    assert run(capsys, "optimize", tmp_path / "m.json", "--set", "nonsense")[0] == 2
    assert run(capsys, "optimize", tmp_path / "m.json", "--set", "shrink=2")[0] == 2


def test_verify(capsys, data):
    code, out, _ = run(capsys, "verify", data / "two_state.json")
    assert code == 0
    assert [line.split()[0] for line in out.splitlines()] == ["PASS"] * 5
    assert run(capsys, "verify", data / "parabola.json", "--budget", "10")[0] == 0


def test_verify_vacuous(capsys, data):
    code, out, err = run(capsys, "verify", data / "choice.json", "--budget", "0")
    assert code == 0 and "vacuous" in err


def test_verify_catches_corrupted_rewards(capsys, data, monkeypatch):
    original = SmdpModel.characteristics

    def corrupted(self, i, us):
        rows, ts, ds = original(self, i, us)
        return rows, ts, ds * 3.0 - 1.0

    monkeypatch.setattr(SmdpModel, "characteristics", corrupted)
    code, out, _ = run(capsys, "verify", data / "choice.json", "--seed", "4")
    assert code == 5
    assert "FAIL  route_agreement" in out


def test_simulate(capsys, data):
    args = ["simulate", data / "two_state.json", data / "two_state_pure.json", "--jumps", "20000", "--seed", "8"]
    code, out, _ = run(capsys, *args)
    doc = json.loads(out)
    assert code == 0 and doc["jumps"] == 20000 and doc["manifest"]["seed"] == 8
    assert run(capsys, *args)[1] == out
    code, out, _ = run(capsys, *args[:3], "--jumps", "0")
    assert code == 1 and out == ""


def test_dumps_is_lossless():
    x = 0.1 + 0.2
    assert float(json.loads(cli.dumps({"x": x}))["x"]) == x
    assert cli.dumps([math.inf, math.nan]) == "[null, null]"
