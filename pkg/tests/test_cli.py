import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qfdekit.cli import main, observed_orders

SPECS = Path(__file__).resolve().parents[1] / "specs"
TRIVIAL = SPECS / "trivial.spec"


def small_spec(tmp_path, name="t.spec", **edits):
    text = TRIVIAL.read_text().replace("n_points = 1001", "n_points = 101").replace("trials = 200", "trials = 40")
    for old, new in edits.values():
        text = text.replace(old, new)
    path = tmp_path / name
    path.write_text(text)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_check_trivial(capsys):
    assert main(["check", str(TRIVIAL)]) == 0
    assert "overall: PASS" in capsys.readouterr().out


def test_check_k_one(capsys):
    assert main(["check", str(SPECS / "k_one.spec")]) == 1
    out = capsys.readouterr().out
    h4 = [line for line in out.splitlines() if line.startswith("H4")][0]
    assert "FAIL" in h4 and "overall: FAIL" in out


def test_check_missing_section(tmp_path, capsys):
    path = tmp_path / "bad.spec"
    path.write_text(TRIVIAL.read_text().split("[constants]")[0])
    assert main(["check", str(path)]) == 2
    assert "[constants]" in capsys.readouterr().err


def test_missing_file(capsys):
    assert main(["check", "/nonexistent/x.spec"]) == 2


def test_solve_trivial_outputs(tmp_path, capsys):
    out, trace, js = tmp_path / "sol.csv", tmp_path / "trace.csv", tmp_path / "r.json"
    assert main(["solve", str(TRIVIAL), "--out", str(out), "--trace", str(trace), "--json", str(js)]) == 0
    rows = read_csv(out)
    t = np.array([float(r["t"]) for r in rows])
    x = np.array([float(r["x"]) for r in rows])
    assert len(rows) == 1001 and np.max(np.abs(x - np.exp(-t))) <= 1e-6
    assert list(read_csv(trace)[0])[:4] == ["iter", "delta", "monotone_flag", "residual"]
    doc = json.loads(js.read_text())
    assert doc["schema_version"] == 1 and doc["solution"]["converged"] is True
    assert doc["solution"]["oracle_gap"] <= 1e-6 and doc["solution"]["gate_passed"] is True
    assert {"created", "version", "kernel_backend"} <= set(doc["metadata"])


def test_csv_uses_round_trip_precision(tmp_path, capsys):
    out = tmp_path / "sol.csv"
    main(["solve", str(small_spec(tmp_path)), "--out", str(out), "--no-oracle"])
    raw = read_csv(out)[37]["x"]
    assert float(raw) == float(format(float(raw), ".17g"))
    assert len(raw.replace("0.", "").lstrip("0")) >= 15


def test_solve_refused_gate(tmp_path, capsys):
    spec = small_spec(tmp_path, x0=("x0 = 1.0", "x0 = 1.5"))
    trace = tmp_path / "tr.csv"
    assert main(["solve", str(spec), "--trace", str(trace)]) == 1
    assert not trace.exists()
    assert "refused" in capsys.readouterr().err
    assert main(["solve", str(spec), "--override-gate", "--no-oracle"]) == 0


def test_record_iterates(tmp_path, capsys):
    spec = load_coupled(tmp_path)
    trace = tmp_path / "tr.csv"
    assert main(["solve", str(spec), "--trace", str(trace), "--record-iterates", "--no-oracle"]) == 0
    rows = read_csv(trace)
    mins = [float(r["min"]) for r in rows]
    assert len(rows) >= 3 and all(b >= a for a, b in zip(mins, mins[1:]))
    its = read_csv(tmp_path / "tr.iterates.csv")
    assert len(its) == len(rows) + 1


def load_coupled(tmp_path):
    text = (SPECS / "coupled.spec").read_text().replace("trials = 200", "trials = 40")
    path = tmp_path / "coupled.spec"
    path.write_text(text)
    return path


def test_nonconvergence_exit_and_partial_trace(tmp_path, capsys):
    spec = small_spec(tmp_path, mo=("max_outer = 200", "max_outer = 1"))
    trace = tmp_path / "tr.csv"
    assert main(["solve", str(spec), "--trace", str(trace)]) == 3
    assert len(read_csv(trace)) == 1


def test_singularity_exit(tmp_path, capsys):
    spec = small_spec(tmp_path, b=("b = const(0)", "b = const(1.2)"))
    assert main(["solve", str(spec), "--override-gate"]) == 4
    assert "t = " in capsys.readouterr().err


def test_json_is_deterministic(tmp_path, capsys):
    spec = small_spec(tmp_path)
    docs = []
    for i in range(2):
        js = tmp_path / f"r{i}.json"
        assert main(["check", str(spec), "--json", str(js), "--seed", "3"]) == 0
        d = json.loads(js.read_text())
        d.pop("metadata")
        docs.append(json.dumps(d, sort_keys=True))
    assert docs[0] == docs[1]


def test_study_trivial(tmp_path, capsys):
    js = tmp_path / "s.json"
    assert main(["study", str(TRIVIAL), "--grids", "401,101,201", "--json", str(js)]) == 0
    rows = json.loads(js.read_text())["rows"]
    assert [r["n_points"] for r in rows] == [101, 201, 401]
    for r in rows[1:]:
        assert 1.7 <= r["order_oracle_gap"] <= 2.3 and 1.7 <= r["order_ode_residual"] <= 2.3


def test_study_pure_integration_marks_exact(capsys):
    assert main(["study", str(SPECS / "pure_integration.spec"), "--grids", "101,201,401"]) == 0
    lines = capsys.readouterr().out.splitlines()[2:]
    assert all(line.split()[3] == "exact" and line.split()[4] == "exact" for line in lines)


def test_study_parallel_matches_serial(tmp_path, capsys):
    spec = small_spec(tmp_path)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["study", str(spec), "--grids", "51,101", "--json", str(a)])
    main(["study", str(spec), "--grids", "51,101", "--json", str(b), "--jobs", "2"])
    assert json.loads(a.read_text())["rows"] == json.loads(b.read_text())["rows"]


def test_study_single_grid_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main(["study", str(TRIVIAL), "--grids", "101"])
    assert err.value.code == 2


def test_observed_orders():
    assert observed_orders([4e-4, 1e-4, None]) == [None, pytest.approx(2.0), None]
    assert observed_orders([1e-14, 2e-14]) == [None, "exact"]


@pytest.mark.parametrize("spec,code", [("trivial.spec", 0), ("k_one.spec", 1)])
def test_console_script_exit_codes(spec, code):
    proc = subprocess.run([sys.executable, "-m", "qfdekit.cli", "check", str(SPECS / spec)],
                          capture_output=True, text=True)
    assert proc.returncode == code
