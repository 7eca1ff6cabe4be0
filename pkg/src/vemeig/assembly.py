"""Global DOF numbering, Dirichlet elimination, and assembly of the split
symmetric pencil A1 (consistency stiffness), A2 (stabilization stiffness),
M1 (consistency mass), M2 (stabilization mass).

With parameter_mode="recipe" the per-cell default parameters are folded into
A2 and M2, so the global knobs alpha and beta act as dimensionless
multipliers of the recipe (alpha = beta = 1 reproduces the baseline runs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.io import mmwrite

from . import conforming as conf
from . import nonconforming as nonconf
from .mesh import PolygonalMesh
from .polybasis import edge_gauss, polygon_quadrature

SPACE_KINDS = ("conforming", "nonconforming")
BOUNDARY_CONDITIONS = ("dirichlet", "neumann")


class AssemblyError(Exception):
    pass


@dataclass
class DofMap:
    """Deterministic global numbering: vertices, then edges (in global edge
    order), then cells; Dirichlet boundary DOFs eliminated by row/column
    removal."""

    kind: str
    k: int
    bc: str
    n_total: int
    full_to_free: np.ndarray
    free_to_full: np.ndarray
    cell_dofs: list  # per cell: global indices in local DOF order
    mesh: PolygonalMesh = field(repr=False)

    @property
    def n_free(self) -> int:
        return len(self.free_to_full)

    def free_indices(self, ci: int):
        """Local slots and free global indices of cell ci's non-eliminated DOFs."""
        g = self.full_to_free[self.cell_dofs[ci]]
        keep = g >= 0
        return np.flatnonzero(keep), g[keep]


def build_dof_map(mesh: PolygonalMesh, kind: str, k: int, bc: str) -> DofMap:
    if kind not in SPACE_KINDS:
        raise ValueError(f"unknown space kind {kind!r}")
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"unknown boundary condition {bc!r}")
    if k < 1:
        raise ValueError("order k must be >= 1")
    n_int = k * (k - 1) // 2
    if kind == "conforming":
        n_em = k - 1
        vertex_base = 0
        edge_base = mesh.n_vertices
        cell_base = edge_base + mesh.n_edges * n_em
    else:
        n_em = k
        edge_base = 0
        cell_base = mesh.n_edges * n_em
    n_total = cell_base + mesh.n_cells * n_int

    cell_dofs = []
    for ci in range(mesh.n_cells):
        cell = mesh.cells[ci]
        dofs = []
        if kind == "conforming":
            dofs.extend(vertex_base + cell)
        for ei in mesh.cell_edge_ids[ci]:
            dofs.extend(edge_base + ei * n_em + j for j in range(n_em))
        dofs.extend(cell_base + ci * n_int + m for m in range(n_int))
        cell_dofs.append(np.array(dofs, dtype=int))

    eliminated = np.zeros(n_total, dtype=bool)
    if bc == "dirichlet":
        boundary_edges = np.flatnonzero(mesh.boundary_edge_flags)
        if kind == "conforming":
            eliminated[mesh.edges[boundary_edges].ravel()] = True
        for ei in boundary_edges:
            eliminated[edge_base + ei * n_em : edge_base + (ei + 1) * n_em] = True
    full_to_free = -np.ones(n_total, dtype=int)
    free = np.flatnonzero(~eliminated)
    full_to_free[free] = np.arange(len(free))
    return DofMap(
        kind=kind,
        k=k,
        bc=bc,
        n_total=n_total,
        full_to_free=full_to_free,
        free_to_full=free,
        cell_dofs=cell_dofs,
        mesh=mesh,
    )


def build_cell_pack(mesh: PolygonalMesh, dofmap: DofMap, ci: int):
    """Projector pack for one cell, with the mesh's global edge orientations."""
    coords = mesh.cell_coords(ci)
    dirs = tuple(mesh.cell_edge_dirs[ci])
    try:
        if dofmap.kind == "conforming":
            layout = conf.build_dof_layout(coords, dofmap.k, dirs, cell_id=ci)
            return conf.build_projectors(coords, dofmap.k, layout, cell_id=ci)
        layout = nonconf.build_nc_dof_layout(coords, dofmap.k, dirs, cell_id=ci)
        return nonconf.build_nc_projectors(coords, dofmap.k, layout, cell_id=ci)
    except conf.LocalElementError:
        raise
    except Exception as e:
        raise AssemblyError(f"local build failed on cell {ci}: {e}") from e


@dataclass
class AssembledPencil:
    """Split global pencil; all four parts symmetric positive semidefinite."""

    A1: sps.csr_matrix
    A2: sps.csr_matrix
    M1: sps.csr_matrix
    M2: sps.csr_matrix
    dofmap: DofMap
    stab_a: str
    stab_b: str
    parameter_mode: str

    @property
    def n(self) -> int:
        return self.A1.shape[0]

    def stiffness(self, alpha: float) -> sps.csr_matrix:
        return (self.A1 + alpha * self.A2).tocsr()

    def mass(self, beta: float, stabilized: bool = True) -> sps.csr_matrix:
        if not stabilized:
            return self.M1.copy()
        return (self.M1 + beta * self.M2).tocsr()


def assemble_pencil(
    mesh: PolygonalMesh,
    dofmap: DofMap,
    stab_a: str = "dofi-dofi",
    stab_b: str = "dofi-dofi",
    parameter_mode: str = "recipe",
) -> AssembledPencil:
    """Scatter-add the split local matrices into the four global parts.

    The scatter runs in cell order with exactly symmetric local blocks, so
    the assembled matrices are exactly symmetric and bit-stable across runs.
    """
    if parameter_mode not in ("recipe", "raw"):
        raise ValueError(f"unknown parameter_mode {parameter_mode!r}")
    n = dofmap.n_free
    rows, cols = [], []
    data = {name: [] for name in ("A1", "A2", "M1", "M2")}
    for ci in range(mesh.n_cells):
        pack = build_cell_pack(mesh, dofmap, ci)
        if dofmap.kind == "conforming":
            lm = conf.local_matrices(pack, stab_a, stab_b)
        else:
            lm = nonconf.nc_local_matrices(pack, stab_a, stab_b)
        K_s, M_s = lm.K_s, lm.M_s
        if parameter_mode == "recipe":
            K_s = lm.default_alpha * K_s
            M_s = lm.default_beta * M_s
        slots, gidx = dofmap.free_indices(ci)
        rows.append(np.repeat(gidx, len(gidx)))
        cols.append(np.tile(gidx, len(gidx)))
        sub = np.ix_(slots, slots)
        data["A1"].append(lm.K_c[sub].ravel())
        data["A2"].append(K_s[sub].ravel())
        data["M1"].append(lm.M_c[sub].ravel())
        data["M2"].append(M_s[sub].ravel())
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    parts = {}
    for name in data:
        mat = sps.coo_matrix(
            (np.concatenate(data[name]), (rows, cols)), shape=(n, n)
        ).tocsr()
        mat.sum_duplicates()
        parts[name] = mat
    return AssembledPencil(
        A1=parts["A1"],
        A2=parts["A2"],
        M1=parts["M1"],
        M2=parts["M2"],
        dofmap=dofmap,
        stab_a=stab_a,
        stab_b=stab_b,
        parameter_mode=parameter_mode,
    )


def assemble_load(mesh: PolygonalMesh, dofmap: DofMap, f) -> np.ndarray:
    """Load vector with entries b(P0 f, phi_i), built from the L2 projector."""
    out = np.zeros(dofmap.n_free)
    degree = min(2 * dofmap.k + 2, 10)
    for ci in range(mesh.n_cells):
        pack = build_cell_pack(mesh, dofmap, ci)
        quad = polygon_quadrature(pack.coords, degree)
        fv = np.array([f(p[0], p[1]) for p in quad.points])
        fmom = (quad.weights * fv) @ pack.basis.eval(quad.points)
        loc = pack.l2_coeff.T @ fmom
        slots, gidx = dofmap.free_indices(ci)
        np.add.at(out, gidx, loc[slots])
    return out


def global_dof_values(mesh: PolygonalMesh, dofmap: DofMap, f) -> np.ndarray:
    """DOF functionals of a smooth function, in global numbering (full size)."""
    out = np.zeros(dofmap.n_total)
    n_int = dofmap.k * (dofmap.k - 1) // 2
    k = dofmap.k
    if dofmap.kind == "conforming":
        n_em = k - 1
        edge_base = mesh.n_vertices
        cell_base = edge_base + mesh.n_edges * n_em
        for vi, (x, y) in enumerate(mesh.vertices):
            out[vi] = f(x, y)
    else:
        n_em = k
        edge_base = 0
        cell_base = mesh.n_edges * n_em
    if n_em > 0:
        for ei, (a, b) in enumerate(mesh.edges):
            p0, p1 = mesh.vertices[a], mesh.vertices[b]  # global orientation
            pts, w = edge_gauss(p0, p1, 2 * k)
            length = np.linalg.norm(p1 - p0)
            mid, tang = 0.5 * (p0 + p1), (p1 - p0) / length
            u = ((pts - mid) @ tang) / length
            fv = np.array([f(p[0], p[1]) for p in pts])
            for j in range(n_em):
                out[edge_base + ei * n_em + j] = (w * u**j) @ fv / length
    if n_int > 0:
        for ci in range(mesh.n_cells):
            pack = build_cell_pack(mesh, dofmap, ci)
            if dofmap.kind == "conforming":
                vals = conf.dof_values(pack, f)
            else:
                vals = nonconf.nc_dof_values(pack, f)
            out[cell_base + ci * n_int : cell_base + (ci + 1) * n_int] = vals[
                pack.layout.interior_slice
            ]
    return out


def sample_cell_polynomials(mesh: PolygonalMesh, dofmap: DofMap, free_vec):
    """Per-cell samples of the energy-projected polynomial of a DOF vector.

    Rows are (cell_id, x, y, value) at the cell vertices and centroid,
    enough to render a per-cell triangulated contour.
    """
    full = np.zeros(dofmap.n_total)
    full[dofmap.free_to_full] = free_vec
    rows = []
    for ci in range(mesh.n_cells):
        pack = build_cell_pack(mesh, dofmap, ci)
        coeffs = pack.energy_coeff @ full[dofmap.cell_dofs[ci]]
        pts = np.vstack([pack.coords, mesh.cell_centroids[ci]])
        vals = pack.basis.eval(pts) @ coeffs
        for p, v in zip(pts, vals):
            rows.append((ci, p[0], p[1], v))
    return rows


def export_matrix_market(matrix, path, comment: str = "") -> None:
    """MatrixMarket coordinate export for external cross-checks."""
    mmwrite(str(path), sps.coo_matrix(matrix), comment=comment, symmetry="symmetric")
