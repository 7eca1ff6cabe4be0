"""Command-line entry point: mesh generation, single solves, convergence
studies, parameter sweeps, and kernel tables.

Every run echoes its effective configuration into the output directory and
writes artifacts atomically, so a run can be reproduced byte-for-byte from
the echoed config.  Exit codes: 0 success, 2 configuration error, 3
numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile

import numpy as np

from .assembly import (
    AssemblyError,
    assemble_pencil,
    build_dof_map,
    export_matrix_market,
    sample_cell_polynomials,
)
from .conforming import LocalElementError
from .gevp import GevpError, smallest_pencil_eigenvalue, solve_pencil
from .mesh import (
    MeshError,
    build_cartesian_mesh,
    build_voronoi_mesh,
    domain_by_name,
    load_mesh,
    save_mesh,
    validate_mesh,
)
from .studies import (
    KERNEL_HEADER,
    exact_square_spectrum,
    fmt,
    kernel_table,
    lowest_eigenpairs,
    lshape_reference_eigenvalues,
    run_convergence,
    run_param_sweep,
    write_csv,
)

DEFAULTS = {
    "domain": "square",
    "bc": "dirichlet",
    "space": "conf",
    "k": 1,
    "alpha": 1.0,
    "beta": 1.0,
    "stab_a": "dofi",
    "stab_b": "dofi",
    "mesh": None,
    "out": "out",
    "n_eigs": 6,
    "window": 40.0,
    "kernel_tol": 1e-10,
    "seed": 1,
    "lloyd": 10,
    "param": "alpha",
    "grid": "0:10:0.5",
    "fixed": None,
    "samples": False,
    "mode": 1,
    "ks": "1,2,3",
    "export_matrices": False,
}


class ConfigError(Exception):
    pass


def atomic_write_text(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_rows(path, header, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(
            ",".join(fmt(v) if isinstance(v, float) else str(v) for v in row)
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def parse_mesh_spec(spec: str, cfg):
    """FILE | voronoi:N:SEED | cartesian:N"""
    domain = domain_by_name(cfg["domain"])
    if spec.startswith("voronoi:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad mesh spec {spec!r}: expected voronoi:N:SEED")
        n, seed = int(parts[1]), int(parts[2])
        return spec.replace(":", "-"), build_voronoi_mesh(
            domain, n, seed, cfg["lloyd"]
        )
    if spec.startswith("cartesian:"):
        n = int(spec.split(":")[1])
        return spec.replace(":", "-"), build_cartesian_mesh(domain, n)
    if os.path.exists(spec):
        return os.path.basename(spec), load_mesh(spec)
    raise ConfigError(f"mesh spec {spec!r} is neither a file nor a generator spec")


def parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError as e:
        raise ConfigError(f"bad grid {text!r}: expected START:STOP:STEP") from e
    if step <= 0 or stop < start:
        raise ConfigError(f"bad grid {text!r}")
    n = int(round((stop - start) / step))
    return start + step * np.arange(n + 1)


def space_kind(cfg) -> str:
    return {"conf": "conforming", "nonconf": "nonconforming"}[cfg["space"]]


def stab_names(cfg):
    stab_a = {"dofi": "dofi-dofi", "diagonal": "diagonal"}[cfg["stab_a"]]
    if cfg["stab_b"] == "none":
        return stab_a, "dofi-dofi", False
    stab_b = {"dofi": "dofi-dofi", "boundary": "boundary"}[cfg["stab_b"]]
    return stab_a, stab_b, True


def echo_config(cfg, out_dir) -> None:
    atomic_write_text(
        os.path.join(out_dir, "config.json"),
        json.dumps(cfg, indent=1, sort_keys=True) + "\n",
    )


def cmd_mesh(cfg) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    spec = cfg["mesh"] or f"voronoi:50:{cfg['seed']}"
    mesh_id, mesh = parse_mesh_spec(spec, cfg)
    save_mesh(mesh, os.path.join(out, "mesh.json"))
    report = validate_mesh(mesh)
    atomic_write_text(
        os.path.join(out, "quality.json"),
        json.dumps(dataclasses.asdict(report), indent=1, sort_keys=True) + "\n",
    )
    echo_config(cfg, out)
    if not report.is_valid:
        print("mesh written, but validation reported failures", file=sys.stderr)
        return 3
    return 0


def _solve_setup(cfg):
    if cfg["mesh"] is None:
        raise ConfigError("solve needs --mesh")
    mesh_id, mesh = parse_mesh_spec(cfg["mesh"], cfg)
    dofmap = build_dof_map(mesh, space_kind(cfg), cfg["k"], cfg["bc"])
    stab_a, stab_b, stabilized = stab_names(cfg)
    pencil = assemble_pencil(mesh, dofmap, stab_a, stab_b, "recipe")
    return mesh_id, mesh, dofmap, pencil, stabilized


def cmd_solve(cfg) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    mesh_id, mesh, dofmap, pencil, stabilized = _solve_setup(cfg)
    A = pencil.stiffness(cfg["alpha"])
    M = pencil.mass(cfg["beta"], stabilized)
    if cfg["export_matrices"]:
        for name, mat in (("A1", pencil.A1), ("A2", pencil.A2),
                          ("M1", pencil.M1), ("M2", pencil.M2)):
            export_matrix_market(mat, os.path.join(out, f"{name}.mtx"))
    res = solve_pencil(A, M, n_lowest=cfg["n_eigs"], kernel_tol=cfg["kernel_tol"])
    rows = [
        (rank + 1, float(lam), float(r))
        for rank, (lam, r) in enumerate(zip(res.eigenvalues, res.residuals))
    ]
    atomic_write_rows(os.path.join(out, "spectrum.csv"), "eig_rank,lambda,residual", rows)
    if cfg["samples"]:
        mode = cfg["mode"] - 1
        if mode < 0 or mode >= res.eigenvectors.shape[1]:
            raise ConfigError(f"--mode {cfg['mode']} out of range")
        vec = res.eigenvectors[:, mode]
        samples = sample_cell_polynomials(mesh, dofmap, vec)
        peak = max(samples, key=lambda row: abs(row[3]))[3]
        if peak < 0:
            samples = [(c, x, y, -v) for c, x, y, v in samples]
        atomic_write_rows(
            os.path.join(out, "samples.csv"),
            "cell_id,x,y,value",
            [(c, float(x), float(y), float(v)) for c, x, y, v in samples],
        )
    echo_config(cfg, out)
    return 0


def cmd_converge(cfg) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    specs = cfg["mesh"] or []
    if isinstance(specs, str):
        specs = [s for s in specs.split(",") if s]
    if len(specs) < 3:
        raise ConfigError("family needs >= 3 meshes")
    meshes = [parse_mesh_spec(s, cfg) for s in specs]
    stab_a, stab_b, stabilized = stab_names(cfg)
    if cfg["domain"] == "square":
        if cfg["bc"] == "dirichlet":
            refs = exact_square_spectrum(cfg["n_eigs"])
        else:
            refs = exact_square_spectrum(cfg["n_eigs"] + 1, bc="neumann")[1:]
    else:
        if cfg["bc"] != "neumann":
            raise ConfigError("the L-shape benchmark uses Neumann conditions")
        refs = lshape_reference_eigenvalues(
            cfg["n_eigs"], cache_path=os.path.join(out, "lshape_reference.json")
        )
    record = run_convergence(
        meshes,
        cfg["bc"],
        space_kind(cfg),
        cfg["k"],
        references=refs,
        alpha=cfg["alpha"],
        beta=cfg["beta"],
        stabilized_mass=stabilized,
        stab_a=stab_a,
        stab_b=stab_b,
        n_eigs=cfg["n_eigs"],
        domain_name=cfg["domain"],
    )
    atomic_write_rows(os.path.join(out, "convergence.csv"), record.HEADER, record.rows)
    atomic_write_text(
        os.path.join(out, "slopes.json"),
        json.dumps({str(k): v for k, v in record.slopes.items()}, indent=1, sort_keys=True)
        + "\n",
    )
    echo_config(cfg, out)
    return 0


def cmd_sweep(cfg) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    mesh_id, mesh, dofmap, pencil, stabilized = _solve_setup(cfg)
    grid = parse_grid(cfg["grid"])
    fixed = cfg["fixed"]
    if fixed is None:
        fixed = cfg["beta"] if cfg["param"] == "alpha" else cfg["alpha"]
    record = run_param_sweep(
        pencil,
        cfg["param"],
        grid,
        fixed_value=fixed,
        window=cfg["window"],
        stabilized_mass=stabilized,
    )
    atomic_write_rows(os.path.join(out, "sweep.csv"), record.HEADER, record.rows)
    branches = [
        {
            "label": b.label,
            "fit_r2": b.fit_r2,
            "fit_coeffs": list(b.fit_coeffs),
            "n_points": len(b.params),
        }
        for b in record.branches
    ]
    atomic_write_text(
        os.path.join(out, "branches.json"), json.dumps(branches, indent=1) + "\n"
    )
    echo_config(cfg, out)
    return 0


def cmd_tables(cfg) -> int:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    specs = cfg["mesh"] or []
    if isinstance(specs, str):
        specs = [s for s in specs.split(",") if s]
    if not specs:
        raise ConfigError("tables need at least one --mesh")
    meshes = [parse_mesh_spec(s, cfg) for s in specs]
    ks = [int(s) for s in str(cfg["ks"]).split(",") if s]
    rows = kernel_table(meshes, ks, bc=cfg["bc"], kernel_tol=cfg["kernel_tol"])
    atomic_write_rows(os.path.join(out, "kernels.csv"), KERNEL_HEADER, rows)
    pencil_rows = []
    for mesh_id, mesh in meshes:
        dofmap = build_dof_map(mesh, "conforming", 1, cfg["bc"])
        pencil = assemble_pencil(mesh, dofmap)
        lam = smallest_pencil_eigenvalue(
            pencil.A1.toarray(), pencil.M1.toarray(), cfg["kernel_tol"]
        )
        pencil_rows.append((1, mesh_id, mesh.n_cells, float(lam)))
    atomic_write_rows(
        os.path.join(out, "pencil_eigenvalue.csv"),
        "k,mesh_id,N_cells,lambda_min",
        pencil_rows,
    )
    echo_config(cfg, out)
    return 0


COMMANDS = {
    "mesh": cmd_mesh,
    "solve": cmd_solve,
    "converge": cmd_converge,
    "sweep": cmd_sweep,
    "tables": cmd_tables,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vemeig",
        description="Virtual element solver for the Laplace eigenvalue problem",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--domain", choices=["square", "lshape"])
    parser.add_argument("--bc", choices=["dirichlet", "neumann"])
    parser.add_argument("--space", choices=["conf", "nonconf"])
    parser.add_argument("--k", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--stab-a", dest="stab_a", choices=["dofi", "diagonal"])
    parser.add_argument(
        "--stab-b", dest="stab_b", choices=["dofi", "boundary", "none"]
    )
    parser.add_argument(
        "--mesh",
        action="append",
        help="FILE | voronoi:N:SEED | cartesian:N (repeatable for families)",
    )
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--window", type=float)
    parser.add_argument("--kernel-tol", dest="kernel_tol", type=float)
    parser.add_argument("--n-eigs", dest="n_eigs", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--lloyd", type=int)
    parser.add_argument("--param", choices=["alpha", "beta"])
    parser.add_argument("--grid", help="START:STOP:STEP")
    parser.add_argument("--fixed", type=float, help="value of the non-swept parameter")
    parser.add_argument("--samples", action="store_true", default=None)
    parser.add_argument("--mode", type=int, help="eigenfunction rank for --samples")
    parser.add_argument("--ks", help="comma-separated orders for tables")
    parser.add_argument("--export-matrices", action="store_true", default=None,
                        dest="export_matrices")
    return parser


def merge_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as f:
                file_cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from e
        unknown = set(file_cfg) - set(DEFAULTS) - {"command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in file_cfg.items() if k != "command"})
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if isinstance(cfg["mesh"], list) and len(cfg["mesh"]) == 1:
        command = getattr(args, "command", None)
        if command not in ("converge", "tables"):
            cfg["mesh"] = cfg["mesh"][0]
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = merge_config(args)
        cfg["command"] = args.command
        return COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (MeshError, AssemblyError, GevpError, LocalElementError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
