from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from cayley_search.cli import main, parse_range


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def csv_body(text: str) -> list[dict[str, str]]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_overlaps_grid(capsys):
    code, out, _ = run(capsys, "overlaps", "--r", "2", "--M", "100", "--gamma", "0.5:3.0:500")
    assert code == 0
    assert out.splitlines()[0] == "# cayley-search overlaps --r 2 --M 100 --gamma 0.5:3.0:500"
    rows = csv_body(out)
    assert len(rows) == 500
    ov = [k for k in rows[0] if k.startswith("ov_") and not k.startswith("ov_s_")]
    assert len(ov) == 36
    assert float(rows[0]["gamma"]) == 0.5 and float(rows[-1]["gamma"]) == 3.0


def test_search_multi(capsys):
    code, out, _ = run(capsys, "search", "--r", "2", "--M", "100", "--mode", "multi")
    assert code == 0
    doc = json.loads(out)
    assert doc["success"] >= 0.99
    assert len(doc["stages"]) == 2


def test_search_weighted_single(capsys):
    code, out, _ = run(capsys, "search", "--r", "2", "--M", "100", "--weights", "top=100", "--mode", "single")
    assert code == 0
    doc = json.loads(out)
    assert doc["success"] >= 0.97
    assert doc["total_time"] == pytest.approx(140.6, rel=0.05)


def test_search_paper_schedule(capsys):
    code, out, _ = run(capsys, "search", "--M", "100", "--mode", "paper")
    doc = json.loads(out)
    assert code == 0 and doc["success"] >= 0.99


def test_search_fixed_needs_rate(capsys):
    code, _, err = run(capsys, "search", "--M", "10", "--mode", "fixed")
    assert code == 1 and "usage" in err
    code, out, _ = run(capsys, "search", "--M", "10", "--mode", "fixed", "--rate", "1.1")
    assert code == 0 and len(json.loads(out)["stages"]) == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["search", "--bogus"],
        ["teleport"],
        ["search", "--r", "0"],
        ["overlaps", "--gamma", "3:1:10"],
        ["search", "--weights", "heavy"],
        ["search", "--graph", "{not json"],
    ],
)
def test_validation_errors_exit_one(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 1
    assert "usage" in err
    assert out == ""


def test_numerical_failure_exits_two(capsys):
    graph = json.dumps({"kind": "cayley", "r": 2, "M": 30, "noise": {"sigma": 0.01, "seed": 1}})
    code, _, err = run(capsys, "search", "--graph", graph, "--space", "reduced")
    assert code == 2
    assert "numerical failure" in err


def test_help_exits_zero(capsys):
    code, out, _ = run(capsys, "--help")
    assert code == 0 and "sweep-m" in out


def test_identical_invocations_are_byte_identical(capsys):
    argv = ["noise", "--M", "8", "--sigma", "0.01,0.1", "--trials", "3"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    assert a == b and a.startswith("# cayley-search noise")


def test_reduce_matrix(capsys):
    code, out, _ = run(capsys, "reduce", "--M", "4")
    assert code == 0
    rows = csv_body(out)
    assert [r["state"] for r in rows] == ["P2", "D1.2", "D0.2", "P1", "D0.1", "P0"]
    h = np.array([[float(r[k]) for k in ("P2", "D1.2", "D0.2", "P1", "D0.1", "P0")] for r in rows])
    assert np.allclose(h, h.T)
    assert h[3, 1] == pytest.approx(-np.sqrt(3), abs=1e-15)
    assert "-0.0" not in out


def test_connectivity_table_layout(capsys):
    code, out, _ = run(capsys, "connectivity", "--format", "table", "--M", "5", "--joined-n", "8")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].split()[:2] == ["graph", "N"]
    assert len(lines) == 6
    assert lines[-1].startswith("joined complete")


def test_connectivity_single_graph(capsys):
    code, out, _ = run(capsys, "connectivity", "--graph", '{"kind": "joined_complete", "n": 8}', "--format", "json")
    assert code == 0
    assert json.loads(out)[0]["vertex_conn"] == 1


def test_out_file_gets_sidecar(tmp_path, capsys):
    path = tmp_path / "sweep.csv"
    code, out, _ = run(capsys, "sweep-m", "--M-list", "10,20", "--out", str(path))
    assert code == 0 and out == ""
    rows = csv_body(path.read_text())
    assert [r["M"] for r in rows] == ["10", "20"]
    side = json.loads((tmp_path / "sweep.csv.json").read_text())
    assert side["invocation"] == f"cayley-search sweep-m --M-list 10,20 --out {path}"
    assert [r["spec"]["graph"]["M"] for r in side["result"]] == [10, 20]


def test_perturb_subcommand(capsys):
    code, out, _ = run(capsys, "perturb", "--M", "50", "--type", "connect_half_groups_to_root")
    assert code == 0
    (row,) = csv_body(out)
    assert row["failed"] == "true"


def test_sweep_n_and_gamma_dev(capsys):
    code, out, _ = run(capsys, "sweep-n", "--r-list", "1,4")
    assert code == 0 and [r["N"] for r in csv_body(out)] == ["3", "31"]
    code, out, _ = run(capsys, "gamma-dev", "--M-list", "50")
    assert code == 0 and len(csv_body(out)) == 1


def test_parse_range():
    assert parse_range("0.5:3:500") == (0.5, 3.0, 500)


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cayley_search", "reduce", "--M", "3"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("# cayley-search reduce --M 3")
