"""CLI subcommands: exit codes, artifacts, determinism."""

import json

import numpy as np
import pytest

from weingarten import grids
from weingarten.cli import main

GEODESIC_H = """
space_form = -1
curvature_order = 2
dimension = 2

[domain]
kind = cap
theta0 = 0.6283185307179586
h = 0.08

[psi]
expr = 3.467139042295287   # coth(0.6)^2

[boundary]
rho = 0.6

[subsolution]
rho = 0.6
"""

SADDLE = """
space_form = 0
curvature_order = 2
dimension = 2

[domain]
kind = cap
theta0 = 0.6283185307179586
h = 0.1

[psi]
expr = 1

[boundary]
rho = 1/(1.5 + 2*(y1*y1 - y2*y2))

[subsolution]
rho = 1/(1.5 + 2*(y1*y1 - y2*y2))
"""

OFFCENTER = """
space_form = 0
curvature_order = 2
dimension = 2

[domain]
kind = cap
theta0 = 0.6283185307179586
h = 0.07

[psi]
expr = 1

[boundary]
rho = 0.3/sqrt(1 + y1^2 + y2^2) + sqrt(0.91 + 0.09/(1 + y1^2 + y2^2))

[subsolution]
sphere = 0.9 0 0 0.45434653266964176

[exact]
rho = 0.3/sqrt(1 + y1^2 + y2^2) + sqrt(0.91 + 0.09/(1 + y1^2 + y2^2))
"""


@pytest.fixture
def problem_file(tmp_path):
    def write(text, name="prob.wg"):
        p = tmp_path / name
        p.write_text(text)
        return str(p)

    return write


def test_solve_geodesic(problem_file, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["solve", "--problem", problem_file(GEODESIC_H), "--out", str(out)])
    assert rc == 0
    assert (out / "solution.grid").exists()
    assert (out / "report.json").exists()
    assert (out / "solution.csv").exists()
    assert (out / "run_meta.json").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "Converged"
    assert report["final_residual"] < 1e-9
    grid, field, sf = grids.load_grid(out / "solution.grid")
    assert sf == -1
    assert field.representation == "v"
    header = (out / "solution.csv").read_text().splitlines()[0]
    assert header == "y1,y2,rho,kappa_min,kappa_max,residual"


def test_solve_report_deterministic(problem_file, tmp_path):
    p = problem_file(GEODESIC_H)
    rc1 = main(["solve", "--problem", p, "--out", str(tmp_path / "a")])
    rc2 = main(["solve", "--problem", p, "--out", str(tmp_path / "b")])
    assert rc1 == rc2 == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    assert a == b
    ga = (tmp_path / "a" / "solution.grid").read_bytes()
    gb = (tmp_path / "b" / "solution.grid").read_bytes()
    assert ga == gb


def test_check_subsolution_saddle_exits_2(problem_file, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["check-subsolution", "--problem", problem_file(SADDLE), "--out", str(out)])
    assert rc == 2
    err = capsys.readouterr().err
    payload = json.loads(err.strip().splitlines()[-1])
    assert payload["error"] == "AdmissibilityError"
    report = json.loads((out / "subsolution.json").read_text())
    assert not report["ok"]


def test_check_subsolution_ok(problem_file, tmp_path):
    out = tmp_path / "out"
    rc = main(["check-subsolution", "--problem", problem_file(GEODESIC_H), "--out", str(out)])
    assert rc == 0


def test_parse_error_exit_1(problem_file, tmp_path, capsys):
    rc = main([
        "solve", "--problem", problem_file(GEODESIC_H + "\n[domain]\nbogus = 1\n"),
        "--out", str(tmp_path / "o"),
    ])
    assert rc == 1
    err = capsys.readouterr().err
    assert "bogus" in err


def test_solve_offcenter_and_curvature_roundtrip(problem_file, tmp_path):
    out = tmp_path / "out"
    rc = main(["solve", "--problem", problem_file(OFFCENTER), "--out", str(out)])
    assert rc == 0
    out2 = tmp_path / "curv"
    rc2 = main(["curvature", "--grid", str(out / "solution.grid"), "--out", str(out2)])
    assert rc2 == 0
    summary = json.loads((out2 / "curvature.json").read_text())
    assert summary["strictly_locally_convex"]
    # converged off-center sphere: kappa == 1 up to O(h^2)
    assert abs(summary["kappa_min"] - 1.0) < 5e-3
    assert abs(summary["kappa_max"] - 1.0) < 5e-3


def test_curvature_rho_grid(tmp_path):
    g = grids.build_cap_domain(np.pi / 5, 0.1)
    field = grids.GraphField(g, np.full(g.n_nodes, 0.7), "rho")
    path = tmp_path / "g.grid"
    grids.save_grid(path, g, field, space_form=-1)
    out = tmp_path / "curv"
    rc = main(["curvature", "--grid", str(path), "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "curvature.json").read_text())
    expect = np.cosh(0.7) / np.sinh(0.7)
    assert summary["kappa_min"] == pytest.approx(expect, abs=1e-10)


def test_lincheck(problem_file, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["lincheck", "--problem", problem_file(GEODESIC_H), "--out", str(out),
               "--samples", "10"])
    assert rc == 0
    report = json.loads((out / "lincheck.json").read_text())
    assert report["max_rel_err"] < 1e-5


def test_convergence_subcommand(problem_file, tmp_path, capsys):
    out = tmp_path / "out"
    rc = main([
        "convergence", "--problem", problem_file(OFFCENTER), "--out", str(out),
        "--levels", "2", "--h", "0.09",
    ])
    assert rc == 0
    payload = json.loads((out / "convergence.json").read_text())
    assert len(payload["levels"]) == 2
    assert payload["observed_orders"][0] > 1.7
