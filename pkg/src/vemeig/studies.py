"""Benchmark drivers: convergence studies, stabilization-parameter sweeps,
kernel tables, and the synthetic two-family pencil model.

CSV schemas (exact headers):
  convergence:  mesh_id,h,N_h,eig_index,lambda_ref,lambda_h,rel_err
  sweep:        param_name,param_value,eig_rank,lambda,branch_label,fit_r2
  kernel table: k,mesh_id,N_cells,ker_A1,ker_M1
All floats are serialized with 17 significant digits.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spsla
from scipy.optimize import linear_sum_assignment

from .assembly import AssembledPencil, assemble_pencil, build_dof_map
from .gevp import SpectralResult, kernel_dim, solve_pencil, solve_spd
from .mesh import (
    Domain,
    PolygonalMesh,
    build_cartesian_mesh,
    build_voronoi_mesh,
)

ERROR_FLOOR = 1e-11  # rounding-error plateau guard for slope fits
DENSE_LIMIT = 6500  # above this, convergence studies switch to Lanczos
ZERO_MODE_TOL = 1e-8  # Neumann constant-mode cutoff


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path, header: str, rows) -> None:
    with open(path, "w") as f:
        f.write(header + "\n")
        for row in rows:
            f.write(
                ",".join(fmt(v) if isinstance(v, float) else str(v) for v in row)
                + "\n"
            )


# ---------------------------------------------------------------------------
# reference spectra


def exact_square_spectrum(n_lowest: int, bc: str = "dirichlet") -> np.ndarray:
    """Laplace eigenvalues i^2 + j^2 on the side-pi square, with multiplicity."""
    start = 1 if bc == "dirichlet" else 0
    bound = 4
    while True:
        vals = [
            i * i + j * j
            for i in range(start, bound + 1)
            for j in range(start, bound + 1)
        ]
        vals = sorted(v for v in vals if v <= bound * bound)
        if len(vals) >= n_lowest:
            return np.array(vals[:n_lowest], dtype=float)
        bound *= 2


def richardson_extrapolate(coarse, mid, fine, ratio: float = 2.0):
    """Limit estimate from three values of a geometric mesh family.

    Returns (limit, fitted_rate); refuses non-monotone sequences by raising
    ValueError.
    """
    d1, d2 = coarse - mid, mid - fine
    if d1 == 0 or d2 == 0 or d1 * d2 < 0 or abs(d2) >= abs(d1):
        raise ValueError("non-monotone or non-contracting eigenvalue sequence")
    gamma = np.log(d1 / d2) / np.log(ratio)
    limit = fine - d2 / (ratio**gamma - 1.0)
    return float(limit), float(gamma)


# ---------------------------------------------------------------------------
# mesh families


def voronoi_family(domain: Domain, n_cells_list, rng_seed=1, lloyd_iterations=10):
    """Deterministic Voronoi refinement family, one mesh per cell count."""
    return [
        (f"voronoi-{n}-s{rng_seed}", build_voronoi_mesh(domain, n, rng_seed, lloyd_iterations))
        for n in n_cells_list
    ]


def cartesian_family(domain: Domain, n_list):
    return [(f"cartesian-{n}", build_cartesian_mesh(domain, n)) for n in n_list]


# ---------------------------------------------------------------------------
# eigen-solves for study drivers


def lowest_eigenpairs(A, M, n_lowest: int) -> SpectralResult:
    """Lowest eigenpairs of the pencil; dense at desk scale, shift-invert
    Lanczos (deterministic start vector) beyond it.  Handles semidefinite
    mass matrices (shift-invert tolerates them; the dense route dispatches
    to the reciprocal solve)."""
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        return solve_pencil(A, M, n_lowest=n_lowest)
    v0 = np.full(n, 1.0 / np.sqrt(n))
    w, V = spsla.eigsh(
        A.tocsc(), k=n_lowest, M=M.tocsc(), sigma=-1.0, v0=v0, which="LM"
    )
    order = np.argsort(w)
    return SpectralResult(eigenvalues=w[order], eigenvectors=V[:, order])


# ---------------------------------------------------------------------------
# convergence studies


@dataclass
class ConvergenceRecord:
    domain: str
    bc: str
    kind: str
    k: int
    rows: list  # (mesh_id, h, N_h, eig_index, lambda_ref, lambda_h, rel_err)
    slopes: dict  # eig_index -> fitted log-log slope
    error_floor: float = ERROR_FLOOR

    HEADER = "mesh_id,h,N_h,eig_index,lambda_ref,lambda_h,rel_err"

    def errors(self, eig_index: int):
        out = [(r[1], r[6]) for r in self.rows if r[3] == eig_index]
        return np.array(out)

    def to_csv(self, path) -> None:
        write_csv(path, self.HEADER, self.rows)


def run_convergence(
    meshes,
    bc: str,
    kind: str,
    k: int,
    references,
    alpha: float = 1.0,
    beta: float = 1.0,
    stabilized_mass: bool = True,
    stab_a: str = "dofi-dofi",
    stab_b: str = "dofi-dofi",
    n_eigs: int = 6,
    error_floor: float = ERROR_FLOOR,
    domain_name: str = "square",
) -> ConvergenceRecord:
    """Assemble, solve, and fit eigenvalue convergence rates on a mesh family.

    references: ascending reference eigenvalues (zero Neumann mode excluded);
    computed spectra are matched to them by sorted order.
    """
    if len(meshes) < 3:
        raise ValueError("family needs >= 3 meshes")
    references = np.asarray(references, dtype=float)[:n_eigs]
    rows = []
    for mesh_id, mesh in meshes:
        dofmap = build_dof_map(mesh, kind, k, bc)
        pencil = assemble_pencil(mesh, dofmap, stab_a, stab_b, "recipe")
        A = pencil.stiffness(alpha)
        M = pencil.mass(beta, stabilized_mass)
        n_want = n_eigs + (4 if bc == "neumann" else 0)
        res = lowest_eigenpairs(A, M, min(n_want, dofmap.n_free))
        lams = res.eigenvalues
        if bc == "neumann":
            lams = lams[np.abs(lams) > ZERO_MODE_TOL]
        for j, lam_ref in enumerate(references):
            if j >= len(lams):
                warnings.warn(f"{mesh_id}: eigenvalue {j} missing from window")
                continue
            rel = abs(lams[j] - lam_ref) / abs(lam_ref)
            rows.append((mesh_id, float(mesh.h), dofmap.n_free, j, float(lam_ref), float(lams[j]), float(rel)))
    slopes = {}
    for j in range(len(references)):
        pts = [(r[1], r[6]) for r in rows if r[3] == j and r[6] > error_floor]
        if len(pts) >= 2:
            hs, errs = zip(*pts)
            slopes[j] = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        else:
            slopes[j] = float("nan")
    return ConvergenceRecord(domain_name, bc, kind, k, rows, slopes, error_floor)


def lshape_reference_eigenvalues(
    n_lowest: int,
    mesh_ns=(6, 12, 24),
    cache_path=None,
    kind: str = "conforming",
) -> np.ndarray:
    """Self-contained Neumann reference spectrum for the L-shaped domain.

    Richardson extrapolation of the computed k=2 spectrum on three Cartesian
    meshes with ratio-2 sizes; cached to JSON together with its inputs.
    """
    from .mesh import lshape_domain

    if cache_path is not None:
        try:
            with open(cache_path) as f:
                doc = json.load(f)
            if doc.get("mesh_ns") == list(mesh_ns) and len(doc["values"]) >= n_lowest:
                return np.array(doc["values"][:n_lowest])
        except (OSError, ValueError, KeyError):
            pass
    domain = lshape_domain()
    spectra = []
    for n in mesh_ns:
        mesh = build_cartesian_mesh(domain, n)
        dofmap = build_dof_map(mesh, kind, 2, "neumann")
        pencil = assemble_pencil(mesh, dofmap)
        res = lowest_eigenpairs(pencil.stiffness(1.0), pencil.mass(1.0), n_lowest + 4)
        lams = res.eigenvalues
        spectra.append(lams[np.abs(lams) > ZERO_MODE_TOL][: n_lowest])
    spectra = np.array(spectra)
    values, rates = [], []
    for j in range(n_lowest):
        try:
            limit, gamma = richardson_extrapolate(
                spectra[0, j], spectra[1, j], spectra[2, j]
            )
        except ValueError:
            warnings.warn(
                f"extrapolation refused for eigenvalue {j}: non-monotone sequence; "
                "returning the finest-mesh value"
            )
            limit, gamma = float(spectra[2, j]), float("nan")
        values.append(limit)
        rates.append(gamma)
    if cache_path is not None:
        with open(cache_path, "w") as f:
            json.dump(
                {"mesh_ns": list(mesh_ns), "k": 2, "values": values, "rates": rates},
                f,
                indent=1,
            )
    return np.array(values)


# ---------------------------------------------------------------------------
# parameter sweeps


@dataclass
class Branch:
    label: str  # physical | spurious-linear | spurious-hyperbolic | unclassified
    params: list
    lams: list
    fit_r2: float = float("nan")
    fit_coeffs: tuple = ()
    last_vec: np.ndarray | None = field(default=None, repr=False)


@dataclass
class SweepRecord:
    param_name: str
    grid: np.ndarray
    window: float
    rows: list  # (param_name, param_value, eig_rank, lambda, branch_label, fit_r2)
    branches: list

    HEADER = "param_name,param_value,eig_rank,lambda,branch_label,fit_r2"

    def to_csv(self, path) -> None:
        write_csv(path, self.HEADER, self.rows)

    def branches_labeled(self, label: str):
        return [b for b in self.branches if b.label == label]


def _r_squared(y, y_fit):
    ss_res = np.sum((y - y_fit) ** 2)
    ss_tot = np.sum((y - np.mean(y)) ** 2)
    if ss_tot == 0:
        return 1.0
    return 1.0 - ss_res / ss_tot


def _classify_branch(branch: Branch, flat_tol: float, r2_tol: float) -> None:
    t = np.asarray(branch.params)
    y = np.asarray(branch.lams)
    if len(t) < 3:
        branch.label = "unclassified"
        return
    spread = (y.max() - y.min()) / max(abs(y.mean()), 1e-300)
    if spread < flat_tol:
        branch.label = "physical"
        branch.fit_r2 = 1.0
        branch.fit_coeffs = (float(y.mean()),)
        return
    a, b = np.polyfit(t, y, 1)
    r2_lin = _r_squared(y, a * t + b)
    r2_hyp, hyp_coeffs = -np.inf, None
    if np.all(t > 0):
        c, d = np.polyfit(1.0 / t, y, 1)
        r2_hyp = _r_squared(y, c / t + d)
        hyp_coeffs = (float(c), float(d))
    if r2_lin >= r2_tol and (r2_lin >= r2_hyp or hyp_coeffs is None) and a > 0:
        branch.label = "spurious-linear"
        branch.fit_r2 = float(r2_lin)
        branch.fit_coeffs = (float(a), float(b))
    elif r2_hyp >= r2_tol and hyp_coeffs is not None and hyp_coeffs[0] > 0:
        branch.label = "spurious-hyperbolic"
        branch.fit_r2 = float(r2_hyp)
        branch.fit_coeffs = hyp_coeffs
    else:
        branch.label = "unclassified"
        branch.fit_r2 = float(max(r2_lin, r2_hyp))


def run_param_sweep(
    pencil: AssembledPencil,
    param: str,
    grid,
    fixed_value: float,
    window: float = 40.0,
    stabilized_mass: bool = True,
    flat_tol: float = 0.01,
    r2_tol: float = 0.99,
    window_margin: float = 1.3,
) -> SweepRecord:
    """Spectrum per grid value with branch tracking and classification.

    Branches follow eigenvector overlap across the grid (optimal assignment),
    so a spurious branch keeps its identity while crossing physical lines.
    """
    if param not in ("alpha", "beta"):
        raise ValueError("param must be 'alpha' or 'beta'")
    grid = np.asarray(sorted(grid), dtype=float)
    cap = window * window_margin
    branches: list[Branch] = []
    active: list[Branch] = []
    for g in grid:
        alpha, beta = (g, fixed_value) if param == "alpha" else (fixed_value, g)
        A = pencil.stiffness(alpha)
        M = pencil.mass(beta, stabilized_mass)
        res = solve_pencil(A, M)
        keep = res.eigenvalues <= cap
        lams = res.eigenvalues[keep]
        vecs = res.eigenvectors[:, keep]
        norms = np.linalg.norm(vecs, axis=0)
        norms[norms == 0] = 1.0
        vecs = vecs / norms
        # match to active branches by eigenvector overlap
        assigned = {}
        if active and len(lams):
            prev = np.column_stack([b.last_vec for b in active])
            overlap = np.abs(prev.T @ vecs)
            bi, ni = linear_sum_assignment(-overlap)
            for b_idx, n_idx in zip(bi, ni):
                if overlap[b_idx, n_idx] >= 0.3:
                    assigned[n_idx] = active[b_idx]
        new_active = []
        for idx in range(len(lams)):
            br = assigned.get(idx)
            if br is None:
                br = Branch(label="unclassified", params=[], lams=[])
                branches.append(br)
            br.params.append(float(g))
            br.lams.append(float(lams[idx]))
            br.last_vec = vecs[:, idx]
            new_active.append(br)
        active = new_active
    for br in branches:
        _classify_branch(br, flat_tol, r2_tol)
    out_rows = []
    for g in grid:
        in_window = sorted(
            (lam, id(br), br)
            for br in branches
            for gg, lam in zip(br.params, br.lams)
            if gg == g and lam <= window
        )
        for rank, (lam, _, br) in enumerate(in_window, start=1):
            out_rows.append(
                (param, float(g), rank, float(lam), br.label, float(br.fit_r2))
            )
    return SweepRecord(param, grid, window, out_rows, branches)


# ---------------------------------------------------------------------------
# synthetic two-family pencil


@dataclass
class SyntheticPencil:
    """Block construction satisfying the two-family splitting assumptions:
    the stabilization parts are positive definite exactly on the kernels of
    the consistency parts and vanish on their orthogonal complements."""

    n: int
    A1: np.ndarray
    A2: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    frame: np.ndarray  # orthonormal columns; first blocks span the kernels
    dim_ker_a: int
    dim_ker_m: int
    gen: dict  # diagonal generator spectra

    def compose(self, alpha: float, beta: float):
        return self.A1 + alpha * self.A2, self.M1 + beta * self.M2


def build_synthetic_pencil(
    n: int,
    dim_ker_a: int,
    dim_ker_m: int,
    rng_seed: int,
    value_range=(0.5, 5.0),
) -> SyntheticPencil:
    if dim_ker_a + dim_ker_m > n:
        raise ValueError("kernel dimensions exceed the pencil size")
    rng = np.random.default_rng(rng_seed)
    lo, hi = value_range
    a1 = np.zeros(n)
    a2 = np.zeros(n)
    m1 = np.zeros(n)
    m2 = np.zeros(n)
    ka = slice(0, dim_ker_a)
    km = slice(dim_ker_a, dim_ker_a + dim_ker_m)
    rest = slice(dim_ker_a + dim_ker_m, n)
    a2[ka] = rng.uniform(lo, hi, dim_ker_a)
    m1[ka] = rng.uniform(lo, hi, dim_ker_a)
    a1[km] = rng.uniform(lo, hi, dim_ker_m)
    m2[km] = rng.uniform(lo, hi, dim_ker_m)
    a1[rest] = rng.uniform(lo, hi, n - dim_ker_a - dim_ker_m)
    m1[rest] = rng.uniform(lo, hi, n - dim_ker_a - dim_ker_m)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    pencil = SyntheticPencil(
        n=n,
        A1=Q @ np.diag(a1) @ Q.T,
        A2=Q @ np.diag(a2) @ Q.T,
        M1=Q @ np.diag(m1) @ Q.T,
        M2=Q @ np.diag(m2) @ Q.T,
        frame=Q,
        dim_ker_a=dim_ker_a,
        dim_ker_m=dim_ker_m,
        gen={"a1": a1, "a2": a2, "m1": m1, "m2": m2},
    )
    verify_splitting_assumptions(pencil)
    return pencil


def verify_splitting_assumptions(pencil: SyntheticPencil, tol: float = 1e-12) -> None:
    """Numerical check of the three structural assumptions."""
    for name in ("A1", "A2", "M1", "M2"):
        S = getattr(pencil, name)
        w = np.linalg.eigvalsh(S)
        if w.min() < -tol * max(1.0, w.max()):
            raise AssertionError(f"{name} is not positive semidefinite")
    Q = pencil.frame
    ka = Q[:, : pencil.dim_ker_a]
    km = Q[:, pencil.dim_ker_a : pencil.dim_ker_a + pencil.dim_ker_m]
    scale = max(1.0, np.abs(pencil.A2).max(), np.abs(pencil.M2).max())
    if pencil.dim_ker_a:
        if np.linalg.norm(pencil.A1 @ ka) > tol * scale * pencil.n:
            raise AssertionError("ker block is not in the kernel of A1")
        wa = np.linalg.eigvalsh(ka.T @ pencil.A2 @ ka)
        if wa.min() <= tol:
            raise AssertionError("A2 is not positive definite on ker A1")
    if pencil.dim_ker_m:
        if np.linalg.norm(pencil.M1 @ km) > tol * scale * pencil.n:
            raise AssertionError("ker block is not in the kernel of M1")
        wm = np.linalg.eigvalsh(km.T @ pencil.M2 @ km)
        if wm.min() <= tol:
            raise AssertionError("M2 is not positive definite on ker M1")
    # vanishing on the orthogonal complements
    n = pencil.n
    comp_a = Q[:, pencil.dim_ker_a :]
    if comp_a.size and np.abs(comp_a.T @ pencil.A2 @ comp_a).max() > tol * scale * n:
        raise AssertionError("A2 does not vanish on the complement of ker A1")
    comp_m = np.column_stack(
        [Q[:, : pencil.dim_ker_a], Q[:, pencil.dim_ker_a + pencil.dim_ker_m :]]
    )
    if comp_m.size and np.abs(comp_m.T @ pencil.M2 @ comp_m).max() > tol * scale * n:
        raise AssertionError("M2 does not vanish on the complement of ker M1")


def predict_families(pencil: SyntheticPencil, alpha: float, beta: float):
    """Closed-form spectrum union of the two families.

    Family 1 solves the consistency pencil on the complement of ker A1 (with
    the full mass); family 2 lives on ker A1 with eigenvalues alpha * mu.
    Directions in ker M1 give hyperbolas 1/(beta * omega), infinite at
    beta = 0.  Returns (finite eigenvalues ascending, n_infinite).
    """
    import scipy.linalg as sla

    Q = pencil.frame
    ka = slice(0, pencil.dim_ker_a)
    km = slice(pencil.dim_ker_a, pencil.dim_ker_a + pencil.dim_ker_m)
    rest = slice(pencil.dim_ker_a + pencil.dim_ker_m, pencil.n)
    _, M = pencil.compose(alpha, beta)
    Mq = Q.T @ M @ Q
    A1q = Q.T @ pencil.A1 @ Q
    A2q = Q.T @ pencil.A2 @ Q

    def sym(S):
        return 0.5 * (S + S.T)

    finite = []
    n_inf = 0
    # family 2: alpha-splitting on ker A1
    if pencil.dim_ker_a:
        mu = sla.eigh(sym(A2q[ka, ka]), sym(Mq[ka, ka]), eigvals_only=True)
        finite.extend(alpha * mu)
    # family 1 on ker M1: hyperbolic in beta (infinite at beta = 0)
    if pencil.dim_ker_m:
        if beta == 0:
            n_inf += pencil.dim_ker_m
        else:
            om = sla.eigh(sym(A1q[km, km]), sym(Mq[km, km]), eigvals_only=True)
            finite.extend(om)
    # family 1 on the regular block
    if rest.stop > rest.start:
        om = sla.eigh(sym(A1q[rest, rest]), sym(Mq[rest, rest]), eigvals_only=True)
        finite.extend(om)
    return np.sort(np.array(finite)), n_inf


# ---------------------------------------------------------------------------
# kernel tables


def kernel_table(meshes, k_list, bc: str = "dirichlet", kernel_tol: float = 1e-10):
    """Rows (k, mesh_id, N_cells, ker_A1, ker_M1) for the conforming space."""
    rows = []
    for k in k_list:
        for mesh_id, mesh in meshes:
            dofmap = build_dof_map(mesh, "conforming", k, bc)
            pencil = assemble_pencil(mesh, dofmap)
            rows.append(
                (
                    k,
                    mesh_id,
                    mesh.n_cells,
                    kernel_dim(pencil.A1, kernel_tol),
                    kernel_dim(pencil.M1, kernel_tol),
                )
            )
    return rows


KERNEL_HEADER = "k,mesh_id,N_cells,ker_A1,ker_M1"
