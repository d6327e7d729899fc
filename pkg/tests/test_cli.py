import csv
import io
import json
import shutil
import subprocess

import numpy as np
import pytest

from matchamg.cli import BENCH_COLUMNS, SOLVE_COLUMNS, main
from matchamg.mmio import write_matrix_market
from matchamg.problems import poisson_2d
from matchamg.sparse import ADMISSIBLE_GROUP_SIZES, CsrMatrix


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_solve_generator_table(capsys):
    code, out, _ = run(capsys, "solve", "--gen", "poisson2d:32")
    assert code == 0
    header = out.splitlines()[0].split()
    assert header == SOLVE_COLUMNS
    assert "converged" in out.splitlines()[1]


def test_solve_matrix_file(tmp_path, capsys):
    p = tmp_path / "p.mtx"
    write_matrix_market(poisson_2d(16), p, symmetric=True)
    code, out, _ = run(capsys, "solve", "--matrix", str(p), "--out", "json")
    rep = json.loads(out)
    assert code == 0 and rep["converged"] and rep["n"] == 256 and rep["matrix"] == str(p)


def test_missing_matrix_is_input_error(capsys):
    code, _, err = run(capsys, "solve", "--matrix", "missing.mtx")
    assert code == 4 and "missing.mtx" in err


def test_bad_generator_and_bad_option(capsys):
    assert run(capsys, "solve", "--gen", "ani:x")[0] == 4
    assert run(capsys, "solve", "--gen", "poisson2d:8", "--coarsest-sweeps", "0")[0] == 4
    assert run(capsys, "solve", "--gen", "poisson2d:8", "--rhs", "nofile.txt")[0] == 4


def test_not_converged_exit_code(capsys):
    code, out, _ = run(capsys, "solve", "--gen", "poisson2d:32", "--itmax", "1", "--out", "json")
    rep = json.loads(out)
    assert code == 2 and rep["status"] == "not-converged" and rep["it"] == 1


def test_breakdown_exit_code(tmp_path, capsys):
    p = tmp_path / "indef.mtx"
    write_matrix_market(CsrMatrix.from_dense([[1.0, 2.0], [2.0, 1.0]]), p)
    rhs = tmp_path / "b.txt"
    rhs.write_text("1\n-1\n")
    # the matching step needs a positive diagonal only, so setup succeeds
    code, out, err = run(capsys, "solve", "--matrix", str(p), "--rhs", str(rhs), "--out", "json")
    assert code == 3 and "breakdown" in err
    assert json.loads(out)["status"] == "breakdown"


def test_w_cycle_needs_no_more_iterations(capsys):
    its = {}
    for cyc in ("v", "w"):
        code, out, _ = run(capsys, "solve", "--gen", "ani:64,64,0.001,0", "--cycle", cyc, "--out", "json")
        assert code == 0
        its[cyc] = json.loads(out)["it"]
    assert its["w"] <= its["v"]


def test_solve_csv_and_json_schema(tmp_path, capsys):
    report = tmp_path / "r.csv"
    code, out, _ = run(capsys, "solve", "--gen", "ani:32,32,0.001,pi/8", "--out", "csv", "--report", str(report))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 1 and list(rows[0]) == SOLVE_COLUMNS
    assert report.read_text() == out

    code, out, _ = run(capsys, "solve", "--gen", "ani:32,32,0.001,pi/8", "--out", "json", "--rhs", "random")
    rep = json.loads(out)
    assert set(SOLVE_COLUMNS) <= set(rep)
    assert {"level_sizes", "level_nnz", "stalled", "tie_break", "residual_history"} <= set(rep)
    assert rep["level_sizes"][0] == 1024 and len(rep["level_sizes"]) == rep["nl"]
    assert len(rep["residual_history"]) == rep["it"] + 1
    assert float(rows[0]["nl"]) == rep["nl"]


def test_wvec_file(tmp_path, capsys):
    w = tmp_path / "w.npy"
    np.save(w, np.linspace(1, 2, 256))
    code, out, _ = run(capsys, "solve", "--gen", "poisson2d:16", "--wvec", str(w), "--out", "json")
    assert code == 0 and json.loads(out)["converged"]


def test_bench_rows(capsys):
    code, out, _ = run(capsys, "bench", "--gen", "poisson2d:64", "--repeat", "2", "--vector-size", "20000",
                       "--out", "json")
    assert code == 0
    rows = json.loads(out)["rows"]
    assert all(set(r) == set(BENCH_COLUMNS) for r in rows)
    spmv_rows = [r for r in rows if r["section"] == "spmv" and r["name"] == "poisson2d:64"]
    assert [r["group_size"] for r in spmv_rows] == list(ADMISSIBLE_GROUP_SIZES)
    assert [r["group_size"] for r in spmv_rows if r["auto"]] == [8]
    assert all(r["max_rel_diff"] <= 1e-13 for r in spmv_rows)
    prolong = [r for r in rows if r["name"] == "prolongator"]
    assert len(prolong) == 1 and prolong[0]["group_size"] == 1 and prolong[0]["auto"]
    fused = next(r for r in rows if r["name"] == "fused-triple-dot")
    assert fused["max_rel_diff"] <= 1e-14
    paired = next(r for r in rows if r["name"] == "paired")
    assert paired["max_rel_diff"] == 0.0


def test_bench_csv(capsys):
    code, out, _ = run(capsys, "bench", "--gen", "poisson1d:500", "--repeat", "1", "--vector-size", "1000",
                       "--out", "csv", "--threads", "1")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == BENCH_COLUMNS


@pytest.mark.skipif(shutil.which("matchamg") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["matchamg", "solve", "--gen", "poisson2d:8", "--out", "json"],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["converged"]
