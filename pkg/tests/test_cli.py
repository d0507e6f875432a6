import csv
import io
import json

import pytest

from pspi import cli
from pspi.cli import COMPARE_HEADER, main
from pspi.errors import MonotonicityError
from pspi.formats import TRACE_HEADER, load_model, read_trace_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_det2(capsys):
    code, out, _ = run(capsys, "solve", "--model", "det2", "--algo", "howard", "--pi0", "lex")
    assert code == 0
    assert "policy: 1-0" in out and "values: 18 20" in out and "optimal: true" in out


@pytest.mark.parametrize("algo", ["howard", "simplex", "newton", "pspi-sync", "pspi-async"])
def test_solve_all(capsys, tmp_path, algo):
    out_path = tmp_path / "t.csv"
    code, out, _ = run(capsys, "solve", "--model", "det2", "--algo", algo, "--pi0", "1-1",
                       "--out", str(out_path))
    assert code == 0 and "policy: 1-0" in out
    assert out_path.read_text().splitlines()[0] == ",".join(TRACE_HEADER)


def test_verify(capsys):
    code, out, _ = run(capsys, "verify", "--model", "det2")
    assert code == 0
    assert "communicating: true" in out and "optimal value: 18 20" in out
    code, out, _ = run(capsys, "verify", "--model", "absorb2")
    assert "communicating: false" in out


def test_verify_invalid(capsys, tmp_path):
    p = tmp_path / "bad.json"
    assert run(capsys, "gen", "--states", "2", "--actions", "2", "--out", str(p))[0] == 0
    d = json.loads(p.read_text())
    d["transitions"][0][0] = [0.5, 0.4]
    p.write_text(json.dumps(d))
    code, out, _ = run(capsys, "verify", "--model", str(p))
    assert code == 1 and "valid: false" in out and "state 0 action 0" in out


def test_online_det2(capsys, tmp_path):
    trace, report = tmp_path / "t.csv", tmp_path / "r.json"
    code, out, _ = run(capsys, "online", "--model", "det2", "--algo", "pspi", "--mode", "exact",
                       "--steps", "5", "--x0", "0", "--out", str(trace), "--report", str(report))
    assert code == 0
    rows = read_trace_csv(trace)
    assert len(rows) == 5
    assert [r["k"] for r in rows if r["changed"] == "true"] == ["0"]
    rep = json.loads(report.read_text())
    assert rep["chi"] == [1] and rep["k_prime"] == 0 and rep["final_policy"] == "1-0"


def test_online_rollout(capsys, tmp_path):
    code, out, _ = run(capsys, "online", "--model", "det2", "--algo", "pspi", "--mode", "rollout",
                       "--steps", "10", "--eps", "0.01", "--reps", "4", "--no-crn")
    assert code == 0 and "final policy: 1-0" in out


def test_gen_round_trip(capsys, tmp_path):
    p = tmp_path / "g.json"
    code, _, _ = run(capsys, "gen", "--states", "4", "--actions", "3", "--branching", "2",
                     "--seed", "5", "--communicating", "--out", str(p))
    assert code == 0
    m = load_model(p)
    assert m.num_states == 4
    code, out, _ = run(capsys, "verify", "--model", str(p))
    assert "communicating: true" in out


def test_compare(capsys, tmp_path):
    p = tmp_path / "c.csv"
    code, out, _ = run(capsys, "compare", "--model", "det2", "--steps", "30", "--seeds", "3",
                       "--out", str(p))
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert tuple(rows[0]) == COMPARE_HEADER
    assert len(rows) == 7
    assert p.read_text() == out


@pytest.mark.parametrize("argv", [
    ["solve", "--model", "det2"],
    ["solve", "--model", "nope", "--algo", "howard"],
    ["solve", "--model", "det2", "--algo", "howard", "--pi0", "0-5"],
    ["online", "--model", "det2", "--algo", "pspi", "--x0", "7"],
    ["online", "--model", "det2", "--algo", "pspi", "--steps", "0"],
    ["online", "--model", "det2", "--algo", "pspi", "--out", "/no/such/dir/t.csv"],
    ["gen", "--states", "2", "--actions", "2", "--branching", "3"],
    [],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 1 and err


def test_invariant_exit_code(capsys, monkeypatch):
    def broken(*args, **kwargs):
        raise MonotonicityError("value decreased")
    monkeypatch.setattr(cli, "run_online", broken)
    code, _, err = run(capsys, "online", "--model", "det2", "--algo", "opi")
    assert code == 2 and "invariant" in err


def test_malformed_model_file(capsys, tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{ not json")
    code, _, err = run(capsys, "verify", "--model", str(p))
    assert code == 1 and "m.json:1:" in err
