import csv
import json
import re

import pytest

from ctmax.cli import dispatch, export_curve, read_suite, write_suite
from ctmax.model import model_from_profile, render_model
from ctmax.optimizers import tn_sweep

from conftest import DATA

AUTO = str(DATA / "autonomous.sut")


@pytest.fixture
def m23(tmp_path):
    path = tmp_path / "m23.sut"
    path.write_text(render_model(model_from_profile("2^3")))
    return str(path)


def run(capsys, *argv):
    code = dispatch(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_bounds(capsys):
    code, out, _ = run(capsys, "bounds", "--model", AUTO)
    assert code == 0
    assert re.match(r"lb=6 ub=\d+ tuples=37 allowed=33 forbidden=4$", out.strip())


@pytest.mark.parametrize("argv", [
    ["bounds"],
    ["frobnicate", "--model", AUTO],
    ["can", "--model", AUTO, "--algo", "tabu"],
    ["tn", "--model", AUTO],
    ["tn", "--model", AUTO, "--sweep", "5..2"],
    ["encode", "--model", AUTO, "--problem", "tn"],
    ["bounds", "--model", AUTO, "-t", "5"],
    ["encode", "--model", AUTO, "--problem", "ratio", "--rt", "abc"],
])
def test_usage_errors(argv, capsys):
    assert run(capsys, *argv)[0] == 2


def test_model_errors(tmp_path, capsys):
    bad = tmp_path / "bad.sut"
    bad.write_text("[PARAMETERS]\nA: x, y;\n[CONSTRAINTS]\nB = x;\n")
    code, _, err = run(capsys, "bounds", "--model", str(bad))
    assert code == 1 and "error" in err
    unsat = tmp_path / "unsat.sut"
    unsat.write_text("[PARAMETERS]\nA: x, y;\nB: x, y;\n[CONSTRAINTS]\nA = x;\nA = y;\n")
    assert run(capsys, "bounds", "--model", str(unsat))[0] == 1
    assert run(capsys, "bounds", "--model", str(tmp_path / "missing.sut"))[0] == 1
    code, _, _ = run(capsys, "encode", "--model", AUTO, "--problem", "ratio", "--rt", "1.5",
                     "-N", "4")
    assert code == 1


def test_can_outputs(tmp_path, capsys):
    suite_path, results = tmp_path / "suite.csv", tmp_path / "res.csv"
    code, out, _ = run(capsys, "can", "--model", AUTO, "-o", str(suite_path),
                       "--results", str(results))
    assert code == 0 and out.strip() == "best=8 certified=true"
    rows = list(csv.reader(results.open()))
    assert rows[0] == ["instance", "algo", "encoding", "weights", "seed", "best", "certified",
                       "time_s"]
    assert rows[1][:7] == ["autonomous", "calot", "ccx-a0", "unit", "0", "8", "true"]
    code, out, _ = run(capsys, "verify", "--model", AUTO, "--suite", str(suite_path))
    assert code == 0 and out.splitlines()[0] == "covered=33 allowed=33 ratio=1.0"


def test_can_seeds_mean_row(tmp_path, capsys):
    results = tmp_path / "res.csv"
    assert run(capsys, "can", "--model", AUTO, "--algo", "linear", "--seeds", "2",
               "--results", str(results))[0] == 0
    rows = list(csv.reader(results.open()))
    assert [r[4] for r in rows[1:]] == ["0", "1", "mean"]
    assert rows[-1][5] == "8.00" and rows[-1][6] == "true"


def test_determinism(tmp_path, capsys):
    outs = []
    for k in range(2):
        path = tmp_path / f"s{k}.csv"
        run(capsys, "can", "--model", AUTO, "--algo", "wpm1", "--seed", "3", "-o", str(path))
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_encode_can_weights(tmp_path, capsys):
    out = tmp_path / "a.wcnf"
    vm = tmp_path / "a.map"
    assert run(capsys, "encode", "--model", AUTO, "--problem", "can", "--weights", "linear",
               "-N", "10", "-o", str(out), "--var-map", str(vm))[0] == 0
    lines = out.read_text().splitlines()
    top = int(lines[0].split()[4])
    weights = sorted(int(l.split()[0]) for l in lines[1:] if int(l.split()[0]) != top)
    assert weights == [1, 2, 3]
    assert "u 10 -> " in vm.read_text()


@pytest.mark.parametrize("problem", ["mcac", "tn", "combined", "ratio"])
def test_encode_problems(problem, tmp_path, capsys):
    out = tmp_path / "x.cnf"
    code = run(capsys, "encode", "--model", AUTO, "--problem", problem, "-N", "8",
               "--rt", "1/2", "-o", str(out))[0]
    assert code == 0
    header = out.read_text().splitlines()[0]
    assert header.startswith("p cnf" if problem == "mcac" else "p wcnf")


def test_encode_too_few_tests(capsys):
    assert run(capsys, "encode", "--model", AUTO, "--problem", "can", "-N", "6")[0] == 2
    # seven pinned witness tuples cannot fit into four tests
    assert run(capsys, "encode", "--model", AUTO, "--problem", "mcac", "-N", "4")[0] == 1
    assert run(capsys, "encode", "--model", AUTO, "--problem", "mcac", "-N", "4",
               "--no-symmetry", "-o", "-")[0] == 0


def test_verify_ten_row_suite(capsys):
    code, out, _ = run(capsys, "verify", "--model", AUTO, "--suite", str(DATA / "autonomous_ca10.csv"))
    first, second = out.splitlines()
    assert code == 0 and first == "covered=33 allowed=33 ratio=1.0"
    data = json.loads(second)
    assert data["covered"] == 33 and data["invalid_rows"] == []


def test_verify_bad_csv(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("L,E,S,M\ndy,hw,ca,nope\n")
    assert run(capsys, "verify", "--model", AUTO, "--suite", str(bad))[0] == 1


def test_tn_sweep_curve(m23, tmp_path, capsys):
    curve, results = tmp_path / "curve.csv", tmp_path / "rows.csv"
    assert run(capsys, "tn", "--model", m23, "--sweep", "1..4", "--curve", str(curve),
               "--results", str(results))[0] == 0
    rows = list(csv.reader(curve.open()))
    assert rows[0] == ["N", "covered", "ratio"]
    assert [int(r[1]) for r in rows[1:]] == [3, 6, 9, 12]
    assert rows[-1][2] == "1.000000"
    assert list(csv.reader(results.open()))[0] == ["N", "covered", "allowed", "ratio", "time_s"]


def test_tn_single(m23, capsys):
    code, out, _ = run(capsys, "tn", "--model", m23, "-N", "2")
    rows = list(csv.reader(out.splitlines()))
    assert code == 0 and len(rows) == 2 and rows[1][:3] == ["2", "6", "12"]


def test_its(m23, tmp_path, capsys):
    curve = tmp_path / "c.csv"
    code, out, _ = run(capsys, "its", "--model", m23, "-N", "6", "--curve", str(curve))
    assert code == 0 and out.strip() == "size=4 covered=12 allowed=12 ratio=1.0"
    assert [r[1] for r in csv.reader(curve.open())][1:] == ["3", "6", "9", "12"]


def test_export_curve_and_suite_round_trip(autonomous):
    import io
    m = model_from_profile("2^3")
    buf = io.StringIO()
    export_curve(tn_sweep(m, 2, 2, 2), buf)
    assert buf.getvalue() == "N,covered,ratio\n2,6,0.500000\n"
    with open(DATA / "autonomous_ca10.csv", newline="") as fh:
        suite = read_suite(autonomous, fh)
    buf = io.StringIO()
    write_suite(autonomous, suite, buf)
    buf.seek(0)
    assert read_suite(autonomous, buf) == suite
