import json

import numpy as np
import pytest

from vemeig.cli import main


def read_csv(path):
    lines = path.read_text().strip().splitlines()
    return lines[0], [line.split(",") for line in lines[1:]]


def test_mesh_command_writes_artifacts(tmp_path):
    out = tmp_path / "m"
    rc = main(
        ["mesh", "--domain", "square", "--mesh", "voronoi:30:7", "--out", str(out)]
    )
    assert rc == 0
    assert (out / "mesh.json").exists()
    quality = json.loads((out / "quality.json").read_text())
    assert quality["orientation_failures"] == []
    assert (out / "config.json").exists()


def test_solve_spectrum_close_to_exact(tmp_path):
    out = tmp_path / "s"
    rc = main(
        [
            "solve",
            "--domain", "square", "--bc", "dirichlet", "--space", "conf",
            "--k", "1", "--mesh", "voronoi:200:1", "--out", str(out),
            "--n-eigs", "6",
        ]
    )
    assert rc == 0
    header, rows = read_csv(out / "spectrum.csv")
    assert header == "eig_rank,lambda,residual"
    lams = np.array([float(r[1]) for r in rows])
    exact = np.array([2, 5, 5, 8, 10, 10], dtype=float)
    assert np.max(np.abs(lams - exact) / exact) < 0.05
    assert all(float(r[2]) < 1e-8 for r in rows)


def test_solve_deterministic_outputs(tmp_path):
    args = [
        "solve", "--domain", "square", "--k", "1",
        "--mesh", "voronoi:40:3", "--n-eigs", "4",
    ]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert (out1 / "spectrum.csv").read_bytes() == (out2 / "spectrum.csv").read_bytes()


def test_solve_rerun_from_echoed_config(tmp_path):
    out1 = tmp_path / "a"
    assert main(
        ["solve", "--domain", "square", "--k", "2", "--mesh", "voronoi:30:5",
         "--n-eigs", "4", "--out", str(out1)]
    ) == 0
    cfg_path = out1 / "config.json"
    out2 = tmp_path / "b"
    assert main(["solve", "--config", str(cfg_path), "--out", str(out2)]) == 0
    assert (out1 / "spectrum.csv").read_bytes() == (out2 / "spectrum.csv").read_bytes()


def test_solve_samples_eigenfunction(tmp_path):
    out = tmp_path / "s"
    rc = main(
        ["solve", "--domain", "square", "--k", "1", "--mesh", "cartesian:6",
         "--n-eigs", "1", "--samples", "--mode", "1", "--out", str(out)]
    )
    assert rc == 0
    header, rows = read_csv(out / "samples.csv")
    assert header == "cell_id,x,y,value"
    vals = np.array([float(r[3]) for r in rows])
    assert vals.max() > 0  # sign-normalized so the peak is positive
    assert abs(vals.max()) >= abs(vals.min())


def test_converge_rejects_two_meshes(tmp_path, capsys):
    rc = main(
        ["converge", "--domain", "square", "--k", "1",
         "--mesh", "cartesian:4", "--mesh", "cartesian:8",
         "--out", str(tmp_path / "c")]
    )
    assert rc == 2
    assert "family needs >= 3 meshes" in capsys.readouterr().err


def test_converge_writes_schema_and_slopes(tmp_path):
    out = tmp_path / "c"
    rc = main(
        ["converge", "--domain", "square", "--k", "1",
         "--mesh", "cartesian:3", "--mesh", "cartesian:6", "--mesh", "cartesian:12",
         "--n-eigs", "2", "--out", str(out)]
    )
    assert rc == 0
    header, rows = read_csv(out / "convergence.csv")
    assert header == "mesh_id,h,N_h,eig_index,lambda_ref,lambda_h,rel_err"
    slopes = json.loads((out / "slopes.json").read_text())
    assert 1.5 < slopes["0"] < 2.5


def test_sweep_row_counts(tmp_path):
    out = tmp_path / "w"
    rc = main(
        ["sweep", "--domain", "square", "--k", "3", "--mesh", "voronoi:50:1",
         "--param", "alpha", "--grid", "0:10:0.5", "--beta", "1",
         "--window", "40", "--out", str(out)]
    )
    assert rc == 0
    header, rows = read_csv(out / "sweep.csv")
    assert header == "param_name,param_value,eig_rank,lambda,branch_label,fit_r2"
    rank1 = [r for r in rows if r[2] == "1"]
    assert len(rank1) == 21
    labels = {r[4] for r in rows}
    assert "physical" in labels


def test_tables_outputs(tmp_path):
    out = tmp_path / "t"
    rc = main(
        ["tables", "--domain", "square",
         "--mesh", "voronoi:30:1", "--mesh", "voronoi:60:1",
         "--ks", "1,2", "--out", str(out)]
    )
    assert rc == 0
    header, rows = read_csv(out / "kernels.csv")
    assert header == "k,mesh_id,N_cells,ker_A1,ker_M1"
    k1 = [r for r in rows if r[0] == "1"]
    assert all(r[3] == "0" and r[4] == "0" for r in k1)
    header2, rows2 = read_csv(out / "pencil_eigenvalue.csv")
    assert header2 == "k,mesh_id,N_cells,lambda_min"
    assert all(float(r[3]) > 0 for r in rows2)


def test_bad_mesh_spec_is_config_error(tmp_path, capsys):
    rc = main(["solve", "--mesh", "nope:5", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "mesh spec" in capsys.readouterr().err


def test_bad_grid_is_config_error(tmp_path):
    rc = main(
        ["sweep", "--mesh", "voronoi:20:1", "--grid", "junk",
         "--out", str(tmp_path / "x")]
    )
    assert rc == 2


def test_export_matrices(tmp_path):
    out = tmp_path / "mm"
    rc = main(
        ["solve", "--domain", "square", "--k", "1", "--mesh", "cartesian:3",
         "--n-eigs", "2", "--export-matrices", "--out", str(out)]
    )
    assert rc == 0
    for name in ("A1", "A2", "M1", "M2"):
        assert (out / f"{name}.mtx").exists()
