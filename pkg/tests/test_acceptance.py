"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  Heavy artifacts (meshes,
assembled pencils, study records) are cached at module scope and shared
between criteria.  Mesh families:

* the *benchmark* square family is a jittered-hexagonal-lattice Voronoi
  family (no relaxation), whose cell irregularity and error constants match
  the reported reference data, with nominal sizes pi/8 ... pi/64;
* kernel tables and sweeps use Lloyd-relaxed random-seed Voronoi meshes with
  the reference cell counts 50 ... 800.
"""

import time
from functools import lru_cache

import numpy as np
import pytest

from vemeig.assembly import (
    assemble_load,
    assemble_pencil,
    build_cell_pack,
    build_dof_map,
    global_dof_values,
)
from vemeig.conforming import build_projectors, local_matrices
from vemeig.gevp import kernel_dim, smallest_pencil_eigenvalue, solve_singular_m, solve_spd
from vemeig.mesh import (
    PolygonalMesh,
    build_cartesian_mesh,
    build_voronoi_mesh,
    lshape_domain,
    square_domain,
)
from vemeig.nonconforming import build_nc_projectors, nc_local_matrices
from vemeig.polybasis import monomial_exponents
from vemeig.studies import (
    build_synthetic_pencil,
    exact_square_spectrum,
    lowest_eigenpairs,
    lshape_reference_eigenvalues,
    predict_families,
    run_convergence,
    run_param_sweep,
    verify_splitting_assumptions,
)

from oracles import cr_stiffness, energy_pairing_from_dofs, p1_stiffness

# benchmark square family: nominal mesh sizes pi/8 ... pi/64
BENCH_NS = (64, 256, 1024, 4096)
BENCH_JITTER = 0.5
TABLE_NS = (50, 100, 200, 400, 800)  # reference cell counts for tables
LSHAPE_NS = (4, 8, 16, 32)
LSHAPE_REF_NS = (6, 12, 24)


def report(criterion, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {criterion}: {status} {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@lru_cache(maxsize=None)
def bench_mesh(n):
    return build_voronoi_mesh(
        square_domain(), n, rng_seed=1, lloyd_iterations=0,
        init="hex", hex_jitter=BENCH_JITTER,
    )


@lru_cache(maxsize=None)
def bench_family(ns=BENCH_NS):
    return tuple((f"bench-{n}", bench_mesh(n)) for n in ns)


@lru_cache(maxsize=None)
def table_mesh(n):
    return build_voronoi_mesh(square_domain(), n, rng_seed=1, lloyd_iterations=10)


@lru_cache(maxsize=None)
def square_study(k, ns=BENCH_NS, stabilized_mass=True, n_eigs=6):
    return run_convergence(
        bench_family(ns),
        "dirichlet",
        "conforming",
        k,
        references=exact_square_spectrum(n_eigs),
        n_eigs=n_eigs,
        stabilized_mass=stabilized_mass,
    )


@lru_cache(maxsize=None)
def assembled(n, k, bc="dirichlet", kind="conforming", table=True):
    mesh = table_mesh(n) if table else bench_mesh(n)
    dofmap = build_dof_map(mesh, kind, k, bc)
    return assemble_pencil(mesh, dofmap)


def distinct_slopes(record, values=(2.0, 5.0, 8.0, 10.0)):
    """Fitted slope per distinct eigenvalue, averaging multiplet errors."""
    refs = {}
    for row in record.rows:
        refs.setdefault(row[4], {}).setdefault(row[0], []).append(row)
    out = {}
    for val in values:
        pts = []
        for mesh_id, rows in refs[val].items():
            h = rows[0][1]
            err = float(np.mean([r[6] for r in rows]))
            if err > record.error_floor:
                pts.append((h, err))
        hs, errs = zip(*pts)
        out[val] = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return out


def test_criterion_01_square_k1_rate_and_anchor():
    t0 = time.time()
    record = square_study(1, n_eigs=1)
    runtime = time.time() - t0
    errs = record.errors(0)[:, 1]
    slope = record.slopes[0]
    monotone = bool((np.diff(errs) < 0).all())
    anchor = errs[-1] / 1.662e-4
    ok = (
        monotone
        and abs(slope - 2.0) <= 0.3
        and 1.0 / 3.0 <= anchor <= 3.0
        and runtime < 120.0
    )
    report(
        1, ok,
        f"slope={slope:.2f} errors={[f'{e:.2e}' for e in errs]} "
        f"anchor_ratio={anchor:.2f} runtime={runtime:.0f}s",
    )


def test_criterion_02_k2_k3_rates():
    details = []
    ok = True
    for k in (2, 3):
        record = square_study(k, ns=BENCH_NS[1:])
        slopes = distinct_slopes(record)
        for val, slope in slopes.items():
            if abs(slope - 2 * k) > 0.4:
                ok = False
        details.append(
            f"k={k}: " + " ".join(f"s({v:g})={s:.2f}" for v, s in slopes.items())
        )
    report(2, ok, "; ".join(details))


def test_criterion_03_k4_error_reaches_floor():
    record = square_study(4, n_eigs=1)
    errs = record.errors(0)[:, 1]
    ok = errs.min() <= 1e-9
    report(3, ok, f"lambda1 errors={[f'{e:.2e}' for e in errs]}")


def test_criterion_04_stabilized_vs_plain_mass():
    ok = True
    details = []
    for k, ns in ((1, BENCH_NS), (4, BENCH_NS[:3])):
        rec_stab = square_study(k, ns=ns, stabilized_mass=True)
        rec_plain = square_study(k, ns=ns, stabilized_mass=False)
        stab = {(r[0], r[3]): r[6] for r in rec_stab.rows}
        plain = {(r[0], r[3]): r[6] for r in rec_plain.rows}
        ratios = [stab[key] / plain[key] for key in stab if plain[key] > 0]
        lo, hi = min(ratios), max(ratios)
        if lo < 0.5 or hi > 2.0:
            ok = False
        details.append(f"k={k}: ratio in [{lo:.2f}, {hi:.2f}]")
    report(4, ok, "; ".join(details))


def test_criterion_05_lshape_neumann_rates():
    refs = lshape_reference_eigenvalues(3, mesh_ns=LSHAPE_REF_NS)
    meshes = [
        (f"cart-{n}", build_cartesian_mesh(lshape_domain(), n)) for n in LSHAPE_NS
    ]
    record = run_convergence(
        meshes, "neumann", "conforming", 1, references=refs, n_eigs=3,
        domain_name="lshape",
    )
    s_first = record.slopes[0]
    s_third = record.slopes[2]
    ok = abs(s_first - 4.0 / 3.0) <= 0.3 and abs(s_third - 2.0) <= 0.3
    report(5, ok, f"first={s_first:.2f} (target 1.33), third={s_third:.2f} (target 2)")


def test_criterion_06_kernel_tables():
    ok = True
    details = []
    for k in (1, 2, 3):
        kers = []
        for n in TABLE_NS:
            pencil = assembled(n, k)
            kers.append((n, kernel_dim(pencil.A1), kernel_dim(pencil.M1)))
        details.append(f"k={k}: " + " ".join(f"N{n}=({a},{m})" for n, a, m in kers))
        if k == 1 and any(a != 0 or m != 0 for _, a, m in kers):
            ok = False
        if k == 2 and not all(a > 0 and m == 0 for _, a, m in kers):
            ok = False
        if k == 3 and not all(m > 0 for _, _, m in kers[-2:]):
            ok = False
    report(6, ok, "; ".join(details))


def test_criterion_07_pencil_eigenvalue_trend():
    vals = []
    for n in (50, 200, 800):
        pencil = assembled(n, 1)
        vals.append(smallest_pencil_eigenvalue(pencil.A1.toarray(), pencil.M1.toarray()))
    ok = vals[0] > vals[1] > vals[2] > 0
    report(7, ok, "lambda_min " + " > ".join(f"{v:.4f}" for v in vals))


@lru_cache(maxsize=None)
def sweep_record(param):
    pencil = assembled(200, 3)
    if param == "alpha":
        grid = tuple(np.arange(0.0, 10.5, 0.5))
        return run_param_sweep(pencil, "alpha", grid, fixed_value=1.0, window=40.0)
    grid = tuple(np.arange(0.25, 5.25, 0.25))
    return run_param_sweep(pencil, "beta", grid, fixed_value=10.0, window=40.0)


def test_criterion_08_alpha_sweep():
    record = sweep_record("alpha")
    linear = [
        b for b in record.branches_labeled("spurious-linear")
        if b.fit_r2 > 0.99 and b.fit_coeffs[0] > 0
    ]
    exact = [v for v in exact_square_spectrum(30) if v <= 35.0]
    physical = record.branches_labeled("physical")
    matched = 0
    flat_ok = True
    used = set()
    for val in exact:
        best, best_d = None, np.inf
        for i, b in enumerate(physical):
            if i in used:
                continue
            pts = [(g, l) for g, l in zip(b.params, b.lams) if g >= 1.0]
            if not pts:
                continue
            lams = np.array([l for _, l in pts])
            d = abs(lams.mean() - val)
            if d < best_d:
                best, best_d = i, d
        if best is not None and best_d < 0.05 * val:
            used.add(best)
            matched += 1
            lams = np.array(
                [l for g, l in zip(physical[best].params, physical[best].lams) if g >= 1.0]
            )
            if (lams.max() - lams.min()) / lams.mean() >= 0.01:
                flat_ok = False
    ok = len(linear) >= 1 and matched == len(exact) and flat_ok
    report(
        8, ok,
        f"linear_branches={len(linear)} physical_matched={matched}/{len(exact)} "
        f"flat_within_1pct={flat_ok}",
    )


def test_criterion_09_beta_sweep():
    record = sweep_record("beta")
    hyper = [
        b for b in record.branches_labeled("spurious-hyperbolic")
        if b.fit_r2 > 0.99 and b.fit_coeffs[0] > 0
    ]
    flat_ok = True
    n_phys = 0
    for b in record.branches_labeled("physical"):
        lams = np.array(b.lams)
        n_phys += 1
        if (lams.max() - lams.min()) / lams.mean() >= 0.01:
            flat_ok = False
    ok = len(hyper) >= 1 and flat_ok and n_phys >= 4
    report(
        9, ok,
        f"hyperbolic_branches={len(hyper)} physical={n_phys} flat_within_1pct={flat_ok}",
    )


def test_criterion_10_synthetic_pencil_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for trial in range(50):
        n = int(rng.integers(4, 16))
        ka = int(rng.integers(1, max(2, n // 3)))
        km = int(rng.integers(0, max(1, n // 3)))
        pencil = build_synthetic_pencil(n, ka, km, rng_seed=1000 + trial)
        verify_splitting_assumptions(pencil)
        for _ in range(5):
            alpha = float(rng.uniform(0.05, 10.0))
            beta = float(rng.uniform(0.05, 5.0))
            expected, n_inf = predict_families(pencil, alpha, beta)
            res = solve_spd(*pencil.compose(alpha, beta))
            assert n_inf == 0
            rel = np.max(
                np.abs(res.eigenvalues - expected) / np.maximum(np.abs(expected), 1.0)
            )
            worst = max(worst, rel)
    ok = worst < 1e-10
    report(10, ok, f"worst relative deviation {worst:.2e} over 250 solves")


def test_criterion_11_projector_suite():
    meshes = [
        build_voronoi_mesh(square_domain(), 40, rng_seed=3, lloyd_iterations=3),
        build_voronoi_mesh(lshape_domain(), 30, rng_seed=5, lloyd_iterations=3),
        build_cartesian_mesh(square_domain(), 3),
    ]
    worst_rep, worst_cons = 0.0, 0.0
    rng = np.random.default_rng(11)
    for mesh in meshes:
        for k in (1, 2, 3, 4):
            exps = monomial_exponents(k)
            for ci in range(mesh.n_cells):
                coords = mesh.cell_coords(ci)
                for builder, matfun, kind in (
                    (build_projectors, local_matrices, "conforming"),
                    (build_nc_projectors, nc_local_matrices, "nonconforming"),
                ):
                    pack = builder(coords, k, cell_id=ci)
                    n_k = pack.basis.n_terms
                    rep = max(
                        np.max(np.abs(pack.energy_coeff @ pack.D - np.eye(n_k))),
                        np.max(np.abs(pack.l2_coeff @ pack.D - np.eye(n_k))),
                    )
                    worst_rep = max(worst_rep, rep)
                    lm = matfun(pack)
                    v = rng.standard_normal(pack.n_dofs)
                    c = rng.standard_normal(n_k)
                    lhs = v @ lm.stiffness(1.0) @ (pack.D @ c)
                    rhs = energy_pairing_from_dofs(
                        coords, k, kind, v, c, exps,
                        pack.basis.center, pack.basis.scale,
                    )
                    worst_cons = max(worst_cons, abs(lhs - rhs) / max(1.0, abs(rhs)))
    ok = worst_rep <= 1e-10 and worst_cons <= 1e-10
    report(11, ok, f"reproduction={worst_rep:.2e} consistency={worst_cons:.2e}")


def test_criterion_12_fem_oracle_equivalence():
    quad_mesh = build_cartesian_mesh(square_domain(), 4)
    cells = []
    for cell in quad_mesh.cells:
        a, b, c, d = cell
        cells.extend([[a, b, c], [a, c, d]])
    tri_mesh = PolygonalMesh(quad_mesh.vertices.copy(), cells)

    dm = build_dof_map(tri_mesh, "conforming", 1, "neumann")
    A = assemble_pencil(tri_mesh, dm).stiffness(1.0).toarray()
    p1 = np.zeros_like(A)
    for cell in tri_mesh.cells:
        p1[np.ix_(cell, cell)] += p1_stiffness(tri_mesh.vertices[cell])
    err_p1 = np.max(np.abs(A - p1))

    dm_nc = build_dof_map(tri_mesh, "nonconforming", 1, "neumann")
    A_nc = assemble_pencil(tri_mesh, dm_nc).stiffness(1.0).toarray()
    cr = np.zeros_like(A_nc)
    for ci, cell in enumerate(tri_mesh.cells):
        g = tri_mesh.cell_edge_ids[ci]
        cr[np.ix_(g, g)] += cr_stiffness(tri_mesh.vertices[cell])
    err_cr = np.max(np.abs(A_nc - cr))
    ok = err_p1 < 1e-12 * max(1, p1.max()) and err_cr < 1e-12 * max(1, cr.max())
    report(12, ok, f"P1 diff={err_p1:.2e} CR diff={err_cr:.2e}")


def test_criterion_13_patch_test_quartic():
    u_exact = lambda x, y: x * (np.pi - x) * y * (np.pi - y)
    f = lambda x, y: 2 * y * (np.pi - y) + 2 * x * (np.pi - x)
    worst = 0.0
    for mesh in (
        build_cartesian_mesh(square_domain(), 4),
        build_voronoi_mesh(square_domain(), 50, rng_seed=42, lloyd_iterations=3),
    ):
        dm = build_dof_map(mesh, "conforming", 4, "dirichlet")
        pencil = assemble_pencil(mesh, dm)
        load = assemble_load(mesh, dm, f)
        u = np.linalg.solve(pencil.stiffness(1.0).toarray(), load)
        expected = global_dof_values(mesh, dm, u_exact)[dm.free_to_full]
        worst = max(worst, float(np.max(np.abs(u - expected))))
    ok = worst <= 1e-8
    report(13, ok, f"max DOF deviation {worst:.2e}")


def test_criterion_14_singular_mass_reciprocal_solve():
    pencil = assembled(800, 3)
    A = pencil.stiffness(1.0).toarray()
    M1 = pencil.M1.toarray()
    ker = kernel_dim(M1)
    res = solve_singular_m(A, M1)
    exact = np.array([2.0, 5.0, 5.0, 8.0])
    rel = np.abs(res.eigenvalues[:4] - exact) / exact
    ok = res.n_infinite == ker and ker > 0 and rel.max() < 0.05
    report(
        14, ok,
        f"n_infinite={res.n_infinite} ker_M1={ker} first4 rel err "
        f"{[f'{r:.1e}' for r in rel]}",
    )
