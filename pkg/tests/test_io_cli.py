import csv
import io as stdio
import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import DATA, load
from valforme import ConfigurationError, ConstraintSet, EconomyTable, solve
from valforme import io
from valforme.cli import (
    EXIT_INFEASIBLE,
    EXIT_INPUT,
    EXIT_INVALID,
    EXIT_NO_ROOT,
    EXIT_OK,
    exit_code_for,
    main,
)
from valforme.errors import (
    FixedCapitalChoiceError,
    InfeasibleAllocationError,
    NoSolutionError,
    SingularMatrixError,
)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(text):
    rows = list(csv.reader(stdio.StringIO(text)))
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# tables and JSON


positive = st.floats(1e-3, 1e6, allow_subnormal=False)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 5).flatmap(lambda N: st.tuples(
    arrays(float, N, elements=st.one_of(st.just(0.0), positive)),
    arrays(float, (N, N), elements=positive),
    arrays(float, N, elements=st.floats(0, 3)),
    st.integers(1, 40),
)))
def test_table_round_trip_is_exact(parts):
    F, U, e, n = parts
    N = len(F)
    t = EconomyTable(tuple(f"B{i}" for i in range(N)), F, U, e, n, N - 1, K_total=float(U.sum() + F.sum()))
    back = io.table_from_dict(json.loads(io.dumps(io.table_to_dict(t))))
    for name in ("F", "U", "e_rates", "K"):
        assert np.array_equal(getattr(back, name), getattr(t, name))
    assert (back.n_cycles, back.wage_index, back.K_total, back.branch_names) == \
        (t.n_cycles, t.wage_index, t.K_total, t.branch_names)


def test_fixture_round_trip(tmp_path):
    t = load("table12.json")
    path = tmp_path / "t.json"
    io.write_json(io.table_to_dict(t), path)
    back = io.load_table(path)
    assert back.machine_index == t.machine_index
    assert np.array_equal(back.U, t.U)


def test_commodities_resolve_by_role():
    data = io.read_json(DATA / "table3A.json")
    for b in data["branches"]:
        b["name"] = "branch " + b["name"]
    t = io.table_from_dict(data)
    assert t.index_of("V") == 2
    assert np.array_equal(t.U, load("table3A.json").U)


def test_malformed_json_reports_location(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"branches": [\n  {"name": "A",, }\n]}\n')
    code, out, err = run(capsys, "solve", "--input", bad)
    assert code == EXIT_INPUT
    assert "line 2" in err and "column" in err


@pytest.mark.parametrize("mutate, word", [
    (lambda d: d.pop("n_cycles"), "n_cycles"),
    (lambda d: d["branches"][0]["inputs"].update({"Z": 1.0}), "Z"),
    (lambda d: d["branches"][0].update({"F": "ten"}), "F"),
])
def test_schema_errors(mutate, word, tmp_path, capsys):
    data = io.read_json(DATA / "table2A.json")
    mutate(data)
    path = tmp_path / "t.json"
    path.write_text(json.dumps(data))
    code, out, err = run(capsys, "solve", "--input", path)
    assert code == EXIT_INPUT
    assert word in err


def test_missing_file(capsys):
    code, out, err = run(capsys, "solve", "--input", "/nonexistent/table.json")
    assert code == EXIT_INPUT


def test_unknown_option_is_input_error(capsys):
    code, _, _ = run(capsys, "solve", "--input", DATA / "table2A.json", "--bogus")
    assert code == EXIT_INPUT


# ---------------------------------------------------------------------------
# exit codes


def test_exit_code_mapping():
    assert exit_code_for(InfeasibleAllocationError("x", branch=0)) == EXIT_INFEASIBLE
    assert exit_code_for(FixedCapitalChoiceError("x")) == EXIT_INFEASIBLE
    assert exit_code_for(NoSolutionError("x")) == EXIT_NO_ROOT
    assert exit_code_for(SingularMatrixError("x", 1)) == EXIT_NO_ROOT
    assert exit_code_for(ValueError("x")) == EXIT_INPUT


def test_solve_infeasible_fixed_capital(capsys):
    code, out, err = run(capsys, "solve", "--input", DATA / "table3A.json", "--fix", "V=990")
    assert code in (EXIT_INFEASIBLE, EXIT_NO_ROOT)
    assert "error" in err


def test_solve_bad_constraint_syntax(capsys):
    code, _, err = run(capsys, "solve", "--input", DATA / "table3A.json", "--constraint", "repro:V:money")
    assert code == EXIT_INPUT


# ---------------------------------------------------------------------------
# solve


def test_solve_two_branch(tmp_path, capsys):
    out_path = tmp_path / "r.json"
    code, out, err = run(capsys, "solve", "--input", DATA / "table2A.json", "--n", 5, "--out", out_path)
    assert code == EXIT_OK
    report = io.read_json(out_path)
    assert report["r_star"] == pytest.approx(0.193146313318, abs=1e-12)
    assert [b["x"] for b in report["branches"]] == pytest.approx([1.071157382, 0.902666912], abs=1e-9)
    assert "r* = 0.193146313318" in out
    assert "VALUES" in out and "PRICES" in out


def test_solve_fixed_three_branch(tmp_path, capsys):
    out_path = tmp_path / "r.json"
    code, out, _ = run(capsys, "solve", "--input", DATA / "table3A.json", "--fix", "V=300", "--out", out_path)
    assert code == EXIT_OK
    report = io.read_json(out_path)
    # [PAPER] Tables 3B/3C
    assert report["r_star"] == pytest.approx(0.286831548657402, abs=1e-12)
    assert report["prices"]["S"] == pytest.approx([95.50500825, 105.2633344, 86.06340165], abs=1e-6)


def test_solve_no_surplus(tmp_path, capsys):
    out_path = tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", "--input", DATA / "table4A.json", "--out", out_path)
    assert code == EXIT_OK
    report = io.read_json(out_path)
    assert all(b["x"] == 1.0 for b in report["branches"])
    assert report["method"] == "no-surplus"


def test_solve_with_offsets_and_reference(tmp_path, capsys):
    out_path = tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", "--input", DATA / "table10A.json", "--fix", "C=385",
                     "--delta-r", "E=0.001", "--delta-r", "V=-0.001", "--reference", "C", "--out", out_path)
    assert code == EXIT_OK
    rates = [b["r"] for b in io.read_json(out_path)["branches"]]
    assert rates == pytest.approx([0.248431518, 0.247431518, 0.246431518], abs=1e-9)


def test_solve_reproduction_constraint(tmp_path, capsys):
    out_path = tmp_path / "r.json"
    code, _, _ = run(capsys, "solve", "--input", DATA / "table3A.json", "--constraint", "repro:V:price:surplus",
                     "--out", out_path)
    assert code == EXIT_OK
    assert io.read_json(out_path)["r_star"] == pytest.approx(0.2868205220330779, abs=1e-13)


def test_machine_report_has_repricing(tmp_path, capsys):
    out_path = tmp_path / "r.json"
    code, out, _ = run(capsys, "solve", "--input", DATA / "table12.json", "--fix", "C=242", "--fix", "V=358",
                       "--fix", "L=5", "--K-total", 933.5, "--out", out_path)
    assert code == EXIT_OK
    assert "next_fixed_capital_cost" in io.read_json(out_path)
    assert "NEXT-PERIOD" in out


def test_output_is_byte_identical(tmp_path, capsys):
    texts = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        code, out, _ = run(capsys, "solve", "--input", DATA / "table3A.json", "--fix", "V=300", "--out", path)
        texts.append((out, path.read_bytes()))
    assert texts[0] == texts[1]


def test_rendered_digits_follow_environment(monkeypatch, capsys):
    monkeypatch.setenv("VALFORME_PRECISION", "6")
    _, out6, _ = run(capsys, "solve", "--input", DATA / "table2A.json")
    assert "r* = 0.193146 " in out6
    monkeypatch.setenv("VALFORME_PRECISION", "17")
    _, out17, _ = run(capsys, "solve", "--input", DATA / "table2A.json")
    assert "r* = 0.19314631331784887" in out17


@pytest.mark.parametrize("value", ["5", "18", "twelve"])
def test_bad_precision(value, monkeypatch):
    monkeypatch.setenv("VALFORME_PRECISION", value)
    with pytest.raises(ConfigurationError):
        io.precision()


def test_default_precision_is_twelve(monkeypatch):
    monkeypatch.delenv("VALFORME_PRECISION", raising=False)
    assert io.fmt(0.286831548657402) == "0.286831548657"
    assert "," not in io.fmt(1234567.891)


# ---------------------------------------------------------------------------
# validate


@pytest.fixture
def report_path(tmp_path, capsys):
    path = tmp_path / "r.json"
    assert run(capsys, "solve", "--input", DATA / "table3A.json", "--fix", "V=300", "--out", path)[0] == 0
    return path


def test_validate_accepts_fresh_report(report_path, capsys):
    code, out, _ = run(capsys, "validate", "--input", report_path)
    assert code == EXIT_OK
    assert out.strip() == "PASS"


def test_validate_names_corrupted_surplus(report_path, tmp_path, capsys):
    report = io.read_json(report_path)
    report["prices"]["S"][1] += 1e-3
    bad = tmp_path / "bad.json"
    io.write_json(report, bad)
    code, out, _ = run(capsys, "validate", "--input", bad)
    assert code == EXIT_INVALID
    assert "residual_I" in out.split()


def test_validate_detects_wrong_price(report_path, tmp_path, capsys):
    report = io.read_json(report_path)
    report["branches"][0]["x"] *= 1.001
    bad = tmp_path / "bad.json"
    io.write_json(report, bad)
    code, out, _ = run(capsys, "validate", "--input", bad)
    assert code == EXIT_INVALID
    assert "residual_II" in out and "price_table" in out


def test_validate_every_corpus_report():
    from conftest import CORPUS, solve_corpus

    for name in CORPUS:
        table, sol = solve_corpus(name)
        echo = table.replace(K_total=sol.K_total)
        report = json.loads(io.dumps(io.solution_report(echo, sol)))
        assert io.validate_report(report) == [], name


# ---------------------------------------------------------------------------
# sweep


def test_sweep_rows_ascending_and_valid(tmp_path, capsys):
    out_path = tmp_path / "s.csv"
    code, _, _ = run(capsys, "sweep", "--input", DATA / "table3A.json", "--vary", "V", "--from", 250, "--to", 450,
                     "--step", 10, "--out", out_path)
    assert code == EXIT_OK
    header, rows = read_csv(out_path.read_text())
    assert header == ["K_fixed", "K_1", "K_2", "K_3", "r_star", "x_1", "x_2", "x_3"]
    fixed = [float(r[0]) for r in rows]
    assert fixed == sorted(fixed) and len(rows) == 21
    table = load("table3A.json")
    for r in rows:
        sol = solve(table, ConstraintSet({2: float(r[0])}))
        assert float(r[4]) == sol.r_star
        assert sol.check() == []
    assert len({r[4] for r in rows}) > 1
    at300 = rows[fixed.index(300.0)]
    assert [float(v) for v in at300[5:]] == pytest.approx([1.197076827, 0.912705477, 0.988324298], abs=1e-9)


def test_zero_fixed_sweep_has_constant_rate(capsys):
    code, out, _ = run(capsys, "sweep", "--input", DATA / "table5A.json", "--vary", "V", "--from", 200, "--to", 300,
                       "--step", 25)
    assert code == EXIT_OK
    _, rows = read_csv(out)
    rates = [float(r[4]) for r in rows]
    assert len(rows) == 5
    assert max(rates) - min(rates) <= 1e-11


def test_sweep_empty_window(capsys):
    code, out, err = run(capsys, "sweep", "--input", DATA / "table3A.json", "--vary", "V", "--from", 980,
                         "--to", 990, "--step", 5)
    assert code == EXIT_INFEASIBLE
    assert "skip" in err


def test_sweep_rejects_bad_range(capsys):
    code, _, _ = run(capsys, "sweep", "--input", DATA / "table3A.json", "--vary", "V", "--from", 300, "--to", 200,
                     "--step", 10)
    assert code == EXIT_INPUT


# ---------------------------------------------------------------------------
# simulate, eigen, bortkiewicz


def test_simulate_converge_csv(tmp_path, capsys):
    out_path = tmp_path / "t.csv"
    code, out, _ = run(capsys, "simulate", "converge", "--config", DATA / "scenario_e1a.json", "--out", out_path)
    assert code == EXIT_OK
    header, rows = read_csv(out_path.read_text())
    assert header[:7] == ["iteration", "K_1", "K_2", "K_3", "r_1", "r_2", "r_3"]
    assert len(rows) == 120
    assert "PASS average rate strictly decreasing" in out
    assert "rates equalize at iteration 100" in out


def test_simulate_one_iteration_matches_solve(tmp_path, capsys):
    cfg = io.read_json(DATA / "scenario_e1b.json")
    cfg["iterations"] = 1
    cfg["input"] = str(DATA / cfg["input"])
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    code, out, err = run(capsys, "simulate", "converge", "--config", path)
    assert code == EXIT_OK
    header, rows = read_csv(out)
    assert len(rows) == 1
    sol = solve(load("table10A.json"), ConstraintSet({1: 385.0}, [0.001, 0.0, -0.001], reference_branch=1))
    assert [float(v) for v in rows[0][1:4]] == list(sol.K)
    assert rows[0][-2] == ""


def test_simulate_okishio(capsys):
    code, out, _ = run(capsys, "simulate", "okishio", "--config", DATA / "okishio.json")
    assert code == EXIT_OK
    assert "PASS r' > r > r''" in out
    assert "r'' = 0.260729890504" in out


def test_simulate_bad_config(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"input": str(DATA / "table5A.json"), "iterations": "many"}))
    code, _, err = run(capsys, "simulate", "converge", "--config", path)
    assert code == EXIT_INPUT


def test_eigen(tmp_path, capsys):
    out_path = tmp_path / "e.json"
    code, out, _ = run(capsys, "eigen", "--input", DATA / "table5A.json", "--out", out_path)
    assert code == EXIT_OK
    # [PAPER] Table 6C
    assert io.read_json(out_path)["r"] == pytest.approx(0.38795164275602, abs=1e-11)
    assert "lambda" in out


def test_eigen_needs_zero_fixed_capital(capsys):
    code, _, err = run(capsys, "eigen", "--input", DATA / "table3A.json")
    assert code == EXIT_INFEASIBLE


def test_bortkiewicz_cli(tmp_path, capsys):
    out_path = tmp_path / "b.json"
    code, out, _ = run(capsys, "bortkiewicz", "--input", DATA / "table5A_1000.json", "--out", out_path)
    assert code == EXIT_OK
    result = io.read_json(out_path)
    sol = result["solution"]
    assert [b["K"] for b in sol["branches"]] == pytest.approx(
        [156.9355618, 282.4836177, 281.0670172, 279.5138033], abs=1e-5)
    assert sol["branches"][3]["x"] == pytest.approx(1.0, abs=1e-9)
    assert io.validate_report(sol) == []


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "valforme", "eigen", "--input", str(DATA / "table5A.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "r      = 0.387951642756" in proc.stdout


def test_csv_nan_is_empty():
    buf = stdio.StringIO()
    io.write_csv(buf, ["a", "b"], [[0.1, float("nan")]])
    assert buf.getvalue() == "a,b\n0.1,\n"
