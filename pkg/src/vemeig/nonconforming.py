"""Per-cell nonconforming virtual element space of order k.

Degrees of freedom are k scaled moments per edge (taken in the global edge
orientation, so the two cells sharing an edge address identical functionals)
plus the interior moments of degree k-2.  The energy projector uses the same
integration-by-parts system as the conforming space, but the boundary terms
are read directly off the edge moments because the normal derivative of a
degree-k polynomial has degree k-1 on each edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .conforming import (
    ProjectorPack,
    _check_cell,
    _edge_moment_mu,
    _edge_setup,
    _l2_from_energy,
    _solve_energy_projector,
    local_matrices,
    mass_parts,
    stiffness_parts,
)
from .polybasis import ScaledMonomialBasis, n_monomials, polygon_quadrature

__all__ = [
    "NonconformingDofLayout",
    "build_nc_dof_layout",
    "build_nc_projectors",
    "nc_local_matrices",
    "nc_dof_values",
    "stiffness_parts",
    "mass_parts",
]


@dataclass(frozen=True)
class NonconformingDofLayout:
    """Edge blocks in cycle order (k moments each), then the interior block."""

    k: int
    n_vertices: int
    edge_dirs: tuple

    @property
    def n_edge_moments(self) -> int:
        return self.k

    @property
    def n_interior(self) -> int:
        return self.k * (self.k - 1) // 2

    @property
    def n_dofs(self) -> int:
        return self.n_vertices * self.k + self.n_interior

    def edge_dof(self, edge: int, j: int) -> int:
        return edge * self.k + j

    def interior_dof(self, m: int) -> int:
        return self.n_vertices * self.k + m

    @property
    def interior_slice(self) -> slice:
        return slice(self.n_vertices * self.k, self.n_dofs)


def build_nc_dof_layout(coords, k: int, edge_dirs=None, cell_id=None):
    if k < 1:
        raise ValueError("order k must be >= 1")
    coords = np.asarray(coords, dtype=float)
    _check_cell(coords, cell_id)
    if edge_dirs is None:
        edge_dirs = (1,) * len(coords)
    return NonconformingDofLayout(
        k=k, n_vertices=len(coords), edge_dirs=tuple(edge_dirs)
    )


def _nc_trace_maps(layout: NonconformingDofLayout, edges):
    """Map cell DOFs to the degree k-1 moment reconstruction of each trace.

    The reconstruction is the L2 projection of the (unknown) trace onto
    degree k-1 edge polynomials; it is exact whenever paired with edge
    polynomials of degree k-1 or lower.
    """
    k = layout.k
    mu = _edge_moment_mu(k)
    G = np.array([[mu[i + j] for i in range(k)] for j in range(k)])
    maps = []
    for i in range(layout.n_vertices):
        E = np.zeros((k, layout.n_dofs))
        for j in range(k):
            E[j, layout.edge_dof(i, j)] = 1.0
        maps.append(sla.solve(G, E, assume_a="pos"))
    return maps


def build_nc_projectors(coords, k: int, layout=None, cell_id=None) -> ProjectorPack:
    coords = np.asarray(coords, dtype=float)
    if layout is None:
        layout = build_nc_dof_layout(coords, k, cell_id=cell_id)
    area = _check_cell(coords, cell_id)
    basis = ScaledMonomialBasis.for_cell(coords, k)
    n_k = basis.n_terms
    n = layout.n_dofs
    n2 = n_monomials(k - 2)

    quad = polygon_quadrature(coords, 2 * k)
    vals = basis.eval(quad.points)
    H = vals.T @ (quad.weights[:, None] * vals)
    H = 0.5 * (H + H.T)
    grads = basis.eval_gradients(quad.points)
    G_stiff = np.einsum("qad,q,qbd->ab", grads, quad.weights, grads)
    G_stiff = 0.5 * (G_stiff + G_stiff.T)

    edges = _edge_setup(coords, layout, 2 * k)
    trace_maps = _nc_trace_maps(layout, edges)

    D = np.zeros((n, n_k))
    for i, ed in enumerate(edges):
        mvals = basis.eval(ed.points)
        for j in range(k):
            D[layout.edge_dof(i, j)] = (ed.weights * ed.u_gauss**j) @ mvals / ed.length
    if n2 > 0:
        D[layout.interior_slice] = H[:n2, :] / area

    B = np.zeros((n_k, n))
    lap = basis.laplacian_coefficients()
    if n2 > 0:
        B -= area * lap.T @ np.eye(n)[layout.interior_slice]
    P0 = np.zeros(n_k)
    r = np.zeros((1, n))
    for i, ed in enumerate(edges):
        # expand (grad m_b . n)|edge, a degree k-1 polynomial in the edge
        # parameter, in the scaled edge monomials; its moments are the DOFs
        dn = basis.eval_gradients(ed.points) @ ed.normal  # (n_gauss, n_k)
        U = ed.u_gauss[:, None] ** np.arange(k)
        coeffs, *_ = np.linalg.lstsq(U, dn, rcond=None)  # (k, n_k)
        for j in range(k):
            B[:, layout.edge_dof(i, j)] += ed.length * coeffs[j]
        P0 += ed.weights @ basis.eval(ed.points)
        r[0, layout.edge_dof(i, 0)] += ed.length

    energy_coeff = _solve_energy_projector(G_stiff, B, P0, r, cell_id)
    energy_dof = D @ energy_coeff

    interior_selector = np.eye(n)[layout.interior_slice]
    l2_coeff = _l2_from_energy(H, energy_coeff, interior_selector, area, k)
    l2_dof = D @ l2_coeff

    return ProjectorPack(
        coords=coords,
        layout=layout,
        basis=basis,
        area=area,
        diameter=basis.scale,
        H=H,
        G_stiff=G_stiff,
        D=D,
        energy_coeff=energy_coeff,
        energy_dof=energy_dof,
        l2_coeff=l2_coeff,
        l2_dof=l2_dof,
        edge_data=edges,
        trace_maps=trace_maps,
    )


def nc_local_matrices(pack: ProjectorPack, stab_a="dofi-dofi", stab_b="dofi-dofi"):
    """Split local matrices; identical composition rules as the conforming case."""
    return local_matrices(pack, stab_a, stab_b)


def nc_dof_values(pack: ProjectorPack, f) -> np.ndarray:
    """Degrees of freedom (edge and interior scaled moments) of a function."""
    layout = pack.layout
    out = np.zeros(layout.n_dofs)
    for i, ed in enumerate(pack.edge_data):
        fv = np.array([f(p[0], p[1]) for p in ed.points])
        for j in range(layout.n_edge_moments):
            out[layout.edge_dof(i, j)] = (ed.weights * ed.u_gauss**j) @ fv / ed.length
    if layout.n_interior > 0:
        quad = polygon_quadrature(pack.coords, 2 * pack.k)
        fv = np.array([f(p[0], p[1]) for p in quad.points])
        low = pack.basis.eval(quad.points)[:, : layout.n_interior]
        out[layout.interior_slice] = (quad.weights * fv) @ low / pack.area
    return out
