"""Per-cell conforming virtual element space of order k.

The enhanced local space carries vertex values, scaled edge moments against
polynomials of degree k-2, and scaled interior moments of degree k-2.  Two
projectors are computable from those degrees of freedom:

* the energy projector onto degree-k polynomials, defined by orthogonality of
  gradients plus a boundary-mean constraint, and
* the L2 projector, computable on the enhanced space because moments of
  degree k-1 and k of a virtual function coincide with those of its energy
  projection up to a computable degree-(k-2) correction.

Local stiffness and mass matrices are split into a consistency part (exact on
polynomials) and a stabilization part acting on the projector complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .mesh import polygon_area
from .polybasis import (
    ScaledMonomialBasis,
    edge_gauss,
    monomial_exponents,
    n_monomials,
    polygon_quadrature,
)

STIFFNESS_STRATEGIES = ("dofi-dofi", "diagonal")
MASS_STRATEGIES = ("dofi-dofi", "boundary")


class LocalElementError(Exception):
    """Raised when a cell cannot support a local element build."""


@dataclass(frozen=True)
class ConformingDofLayout:
    """Ordering contract: vertex block, edge blocks in cycle order, interior.

    Each edge carries k-1 scaled moments taken in the global edge orientation
    (edge_dirs[i] = +1 when the cell cycle agrees with it), so the two cells
    sharing an edge address identical functionals.
    """

    k: int
    n_vertices: int
    edge_dirs: tuple

    @property
    def n_edge_moments(self) -> int:
        return self.k - 1

    @property
    def n_interior(self) -> int:
        return self.k * (self.k - 1) // 2

    @property
    def n_dofs(self) -> int:
        return self.n_vertices * self.k + self.n_interior

    def vertex_dof(self, i: int) -> int:
        return i

    def edge_dof(self, edge: int, j: int) -> int:
        return self.n_vertices + edge * self.n_edge_moments + j

    def interior_dof(self, m: int) -> int:
        return self.n_vertices * self.k + m

    @property
    def interior_slice(self) -> slice:
        return slice(self.n_vertices * self.k, self.n_dofs)


def _check_cell(coords, cell_id=None):
    tag = "" if cell_id is None else f" (cell {cell_id})"
    area = polygon_area(coords)
    if area <= 1e-14:
        raise LocalElementError(
            f"degenerate cell{tag}: signed area {area:.3e} (must be CCW and > 1e-14)"
        )
    lengths = np.linalg.norm(np.roll(coords, -1, axis=0) - coords, axis=1)
    if lengths.min() <= 1e-14:
        raise LocalElementError(f"degenerate cell{tag}: zero-length edge")
    return area


def build_dof_layout(coords, k: int, edge_dirs=None, cell_id=None) -> ConformingDofLayout:
    if k < 1:
        raise ValueError("order k must be >= 1")
    coords = np.asarray(coords, dtype=float)
    _check_cell(coords, cell_id)
    if edge_dirs is None:
        edge_dirs = (1,) * len(coords)
    return ConformingDofLayout(k=k, n_vertices=len(coords), edge_dirs=tuple(edge_dirs))


@dataclass
class _EdgeData:
    """Gauss data for one edge, parametrized along the global orientation."""

    length: float
    u_gauss: np.ndarray  # (x - midpoint) . tangent / length, in [-1/2, 1/2]
    points: np.ndarray
    weights: np.ndarray
    normal: np.ndarray  # outward unit normal (from the CCW cycle)
    u_first: float  # parameter of the cycle-first endpoint (+-1/2)


@dataclass
class ProjectorPack:
    """Projector matrices plus the cached cell geometry they were built from.

    *_coeff matrices map DOF vectors to polynomial coefficients in the scaled
    monomial basis; *_dof matrices map DOF vectors to DOF vectors.
    """

    coords: np.ndarray
    layout: ConformingDofLayout
    basis: ScaledMonomialBasis
    area: float
    diameter: float
    H: np.ndarray
    G_stiff: np.ndarray
    D: np.ndarray
    energy_coeff: np.ndarray
    energy_dof: np.ndarray
    l2_coeff: np.ndarray
    l2_dof: np.ndarray
    edge_data: list
    trace_maps: list  # per edge: (k+1) x n_dofs map to trace coefficients

    @property
    def k(self) -> int:
        return self.layout.k

    @property
    def n_dofs(self) -> int:
        return self.layout.n_dofs


def _edge_setup(coords, layout, n_gauss_degree):
    """Per-edge Gauss rules and orientation data."""
    n_v = len(coords)
    edges = []
    for i in range(n_v):
        a = coords[i]
        b = coords[(i + 1) % n_v]
        length = float(np.linalg.norm(b - a))
        if layout.edge_dirs[i] > 0:
            p0, p1 = a, b
            u_first = -0.5
        else:
            p0, p1 = b, a
            u_first = 0.5
        pts, w = edge_gauss(p0, p1, n_gauss_degree)
        mid = 0.5 * (p0 + p1)
        tang = (p1 - p0) / length
        u = ((pts - mid) @ tang) / length
        t_cycle = (b - a) / length
        normal = np.array([t_cycle[1], -t_cycle[0]])
        edges.append(
            _EdgeData(
                length=length,
                u_gauss=u,
                points=pts,
                weights=w,
                normal=normal,
                u_first=u_first,
            )
        )
    return edges


def _edge_moment_mu(k: int) -> np.ndarray:
    """mu[m] = integral of u^m over (-1/2, 1/2)."""
    m = np.arange(2 * k + 1)
    mu = np.where(m % 2 == 0, 0.5**m / (m + 1), 0.0)
    return mu


def _conforming_trace_maps(layout: ConformingDofLayout, edges):
    """Per edge, the map from cell DOFs to degree-k trace coefficients.

    The trace on an edge is the unique degree-k polynomial matching the two
    endpoint values and the k-1 scaled edge moments.
    """
    k = layout.k
    mu = _edge_moment_mu(k)
    maps = []
    powers = np.arange(k + 1)
    for i, ed in enumerate(edges):
        V = np.zeros((k + 1, k + 1))
        V[0] = ed.u_first**powers
        V[1] = (-ed.u_first) ** powers
        for j in range(k - 1):
            V[2 + j] = mu[j : j + k + 1]
        E = np.zeros((k + 1, layout.n_dofs))
        E[0, layout.vertex_dof(i)] = 1.0
        E[1, layout.vertex_dof((i + 1) % layout.n_vertices)] = 1.0
        for j in range(k - 1):
            E[2 + j, layout.edge_dof(i, j)] = 1.0
        try:
            maps.append(sla.solve(V, E))
        except sla.LinAlgError as e:
            raise LocalElementError(f"singular edge trace system: {e}") from e
    return maps


def _solve_energy_projector(G_stiff, B, P0, r, cell_id=None):
    """Constrained solve: gradient orthogonality plus boundary-mean matching.

    The gradient system alone is rank deficient by the constant mode; the
    mean constraint is appended as a Lagrange multiplier and the saddle
    system factored with pivoting.
    """
    n_k = G_stiff.shape[0]
    S = np.zeros((n_k + 1, n_k + 1))
    S[:n_k, :n_k] = G_stiff
    S[:n_k, n_k] = P0
    S[n_k, :n_k] = P0
    rhs = np.vstack([B, r])
    try:
        lu, piv = sla.lu_factor(S)
        sol = sla.lu_solve((lu, piv), rhs)
    except (sla.LinAlgError, ValueError) as e:
        tag = "" if cell_id is None else f" (cell {cell_id})"
        raise LocalElementError(f"singular projector system{tag}: {e}") from e
    if not np.all(np.isfinite(sol)):
        tag = "" if cell_id is None else f" (cell {cell_id})"
        raise LocalElementError(f"singular projector system{tag}")
    return sol[:n_k]


def _l2_from_energy(H, energy_coeff, interior_selector, area, k):
    """L2 projector coefficients via the enhancement identity.

    Moments of degree <= k-2 are DOFs; for a monomial m_a of higher degree,
    split m_a = q + r with r its L2 projection onto degree k-2: the moment of
    the virtual function against q equals that of its energy projection.
    """
    n_k = H.shape[0]
    n2 = n_monomials(k - 2)
    C = np.zeros((n_k, energy_coeff.shape[1]))
    if n2 > 0:
        C[:n2] = area * interior_selector
    hi = np.arange(n2, n_k)
    if n2 > 0:
        R = sla.solve(H[:n2, :n2], H[:n2, hi], assume_a="pos")
        C[hi] = (H[hi, :] - R.T @ H[:n2, :]) @ energy_coeff + area * (
            R.T @ interior_selector
        )
    else:
        C[hi] = H[hi, :] @ energy_coeff
    return sla.solve(H, C, assume_a="pos")


def build_projectors(coords, k: int, layout=None, cell_id=None) -> ProjectorPack:
    """Energy and L2 projector matrices for one cell."""
    coords = np.asarray(coords, dtype=float)
    if layout is None:
        layout = build_dof_layout(coords, k, cell_id=cell_id)
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
    trace_maps = _conforming_trace_maps(layout, edges)
    mu = _edge_moment_mu(k)

    # DOFs of the monomials
    D = np.zeros((n, n_k))
    for i in range(layout.n_vertices):
        D[layout.vertex_dof(i)] = basis.eval(coords[i : i + 1])[0]
    for i, ed in enumerate(edges):
        mvals = basis.eval(ed.points)
        for j in range(k - 1):
            w = ed.weights * ed.u_gauss**j
            D[layout.edge_dof(i, j)] = (w @ mvals) / ed.length
    if n2 > 0:
        D[layout.interior_slice] = H[:n2, :] / area

    # right-hand sides of the energy projector system, via integration by
    # parts: interior term from interior moment DOFs, boundary term from the
    # polynomial edge traces
    B = np.zeros((n_k, n))
    lap = basis.laplacian_coefficients()  # (n2, n_k)
    if n2 > 0:
        B -= area * lap.T @ np.eye(n)[layout.interior_slice]
    P0 = np.zeros(n_k)
    r = np.zeros((1, n))
    powers = np.arange(k + 1)
    for ed, T in zip(edges, trace_maps):
        U = ed.u_gauss[:, None] ** powers
        trace_at_gauss = U @ T
        dn = basis.eval_gradients(ed.points) @ ed.normal
        B += dn.T @ (ed.weights[:, None] * trace_at_gauss)
        P0 += ed.weights @ basis.eval(ed.points)
        r += ed.length * (mu[: k + 1] @ T)

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


def _sym(mat):
    return 0.5 * (mat + mat.T)


def stiffness_parts(pack: ProjectorPack, strategy: str = "dofi-dofi"):
    """Consistency and unit-parameter stabilization stiffness matrices."""
    K_c = _sym(pack.energy_coeff.T @ pack.G_stiff @ pack.energy_coeff)
    I_minus = np.eye(pack.n_dofs) - pack.energy_dof
    if strategy == "dofi-dofi":
        K_s = I_minus.T @ I_minus
    elif strategy == "diagonal":
        d = np.maximum(1.0, np.diag(K_c))
        K_s = I_minus.T @ (d[:, None] * I_minus)
    else:
        raise ValueError(f"unknown stiffness stabilization strategy {strategy!r}")
    return K_c, _sym(K_s)


def _boundary_mass_stabilizer(pack: ProjectorPack):
    """(h_P / k^2) integral over the cell boundary of the L2 complement.

    Edge traces come from the per-edge trace maps (exact polynomial traces
    for the conforming layout, moment reconstructions for the nonconforming
    one).
    """
    k = pack.k
    M_s = np.zeros((pack.n_dofs, pack.n_dofs))
    for ed, T in zip(pack.edge_data, pack.trace_maps):
        U = ed.u_gauss[:, None] ** np.arange(T.shape[0])
        delta = U @ T - pack.basis.eval(ed.points) @ pack.l2_coeff
        M_s += delta.T @ (ed.weights[:, None] * delta)
    return (pack.diameter / k**2) * M_s


def mass_parts(pack: ProjectorPack, strategy: str = "dofi-dofi"):
    """Consistency and unit-parameter stabilization mass matrices."""
    M_c = _sym(pack.l2_coeff.T @ pack.H @ pack.l2_coeff)
    if strategy == "dofi-dofi":
        I_minus = np.eye(pack.n_dofs) - pack.l2_dof
        M_s = pack.diameter**2 * (I_minus.T @ I_minus)
    elif strategy == "boundary":
        M_s = _boundary_mass_stabilizer(pack)
    else:
        raise ValueError(f"unknown mass stabilization strategy {strategy!r}")
    return M_c, _sym(M_s)


def default_parameters(pack: ProjectorPack, K_c=None, M_c=None):
    """Recipe parameters: mean eigenvalue of each consistency matrix.

    alpha is the mean eigenvalue of the consistency stiffness (trace / N);
    beta the mean eigenvalue of the consistency mass scaled by 1/h^2.  Both
    depend only on the shape of the cell, not its size.
    """
    if K_c is None:
        K_c = _sym(pack.energy_coeff.T @ pack.G_stiff @ pack.energy_coeff)
    if M_c is None:
        M_c = _sym(pack.l2_coeff.T @ pack.H @ pack.l2_coeff)
    n = pack.n_dofs
    alpha = float(np.trace(K_c)) / n
    beta = float(np.trace(M_c)) / (pack.diameter**2 * n)
    return alpha, beta


@dataclass
class LocalMatrices:
    """Split local matrices at unit stabilization parameters."""

    K_c: np.ndarray
    K_s: np.ndarray
    M_c: np.ndarray
    M_s: np.ndarray
    default_alpha: float
    default_beta: float

    def stiffness(self, alpha: float) -> np.ndarray:
        return self.K_c + alpha * self.K_s

    def mass(self, beta: float, stabilized: bool = True) -> np.ndarray:
        return self.M_c + beta * self.M_s if stabilized else self.M_c.copy()


def local_matrices(
    pack: ProjectorPack,
    stab_a: str = "dofi-dofi",
    stab_b: str = "dofi-dofi",
) -> LocalMatrices:
    K_c, K_s = stiffness_parts(pack, stab_a)
    M_c, M_s = mass_parts(pack, stab_b)
    alpha, beta = default_parameters(pack, K_c, M_c)
    return LocalMatrices(K_c, K_s, M_c, M_s, alpha, beta)


def local_stiffness(coords, k, stab_strategy="dofi-dofi", alpha=None):
    """Composed K = K_c + alpha * K_s; alpha=None uses the recipe value."""
    if alpha is not None and alpha < 0:
        raise ValueError("alpha must be >= 0")
    pack = build_projectors(coords, k)
    K_c, K_s = stiffness_parts(pack, stab_strategy)
    if alpha is None:
        alpha, _ = default_parameters(pack, K_c=K_c)
    return K_c + alpha * K_s


def local_mass(coords, k, stab_strategy="dofi-dofi", beta=None, stabilized=True):
    """Composed M = M_c (+ beta * M_s when stabilized)."""
    if beta is not None and beta < 0:
        raise ValueError("beta must be >= 0")
    pack = build_projectors(coords, k)
    M_c, M_s = mass_parts(pack, stab_strategy)
    if not stabilized:
        return M_c
    if beta is None:
        _, beta = default_parameters(pack, M_c=M_c)
    return M_c + beta * M_s


def dof_values(pack: ProjectorPack, f) -> np.ndarray:
    """Degrees of freedom of a smooth function: the interpolation functionals."""
    layout = pack.layout
    out = np.zeros(layout.n_dofs)
    for i in range(layout.n_vertices):
        out[layout.vertex_dof(i)] = f(pack.coords[i, 0], pack.coords[i, 1])
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
