"""Scaled monomial bases and polygon quadrature exact to a requested degree.

All operations are pure functions of their arguments and safe for parallel
per-cell use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .mesh import polygon_area, polygon_centroid, polygon_diameter

MAX_EXACTNESS = 10


def monomial_exponents(k: int) -> np.ndarray:
    """Graded lexicographic multi-indices: (0,0),(1,0),(0,1),(2,0),(1,1),..."""
    exps = [(d - j, j) for d in range(k + 1) for j in range(d + 1)]
    return np.array(exps, dtype=int).reshape(-1, 2)


def n_monomials(k: int) -> int:
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


class ScaledMonomialBasis:
    """Monomials m_a(x) = ((x - center)/scale)^a for |a| <= k on one cell.

    The scaling keeps every basis function O(1) on the cell, so Gram matrices
    stay well conditioned up to moderate degree.
    """

    def __init__(self, k: int, center, scale: float):
        if k < 0:
            raise ValueError("degree must be >= 0")
        self.k = k
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.exponents = monomial_exponents(k)

    @classmethod
    def for_cell(cls, coords, k: int) -> "ScaledMonomialBasis":
        return cls(k, polygon_centroid(coords), polygon_diameter(coords))

    @property
    def n_terms(self) -> int:
        return len(self.exponents)

    def _local(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (pts - self.center) / self.scale

    def eval(self, points) -> np.ndarray:
        """Values, shape (n_points, n_terms)."""
        q = self._local(points)
        ex = self.exponents
        return q[:, 0:1] ** ex[:, 0] * q[:, 1:2] ** ex[:, 1]

    def eval_gradients(self, points) -> np.ndarray:
        """Gradients, shape (n_points, n_terms, 2); entries scale as 1/h."""
        q = self._local(points)
        ex = self.exponents
        out = np.zeros((len(q), self.n_terms, 2))
        px = np.where(ex[:, 0] > 0, ex[:, 0] - 1, 0)
        py = np.where(ex[:, 1] > 0, ex[:, 1] - 1, 0)
        out[:, :, 0] = ex[:, 0] * q[:, 0:1] ** px * q[:, 1:2] ** ex[:, 1]
        out[:, :, 1] = ex[:, 1] * q[:, 0:1] ** ex[:, 0] * q[:, 1:2] ** py
        return out / self.scale

    def eval_laplacians(self, points) -> np.ndarray:
        """Laplacians, shape (n_points, n_terms); entries scale as 1/h^2."""
        q = self._local(points)
        ex = self.exponents
        out = np.zeros((len(q), self.n_terms))
        for t, (a, b) in enumerate(ex):
            if a >= 2:
                out[:, t] += a * (a - 1) * q[:, 0] ** (a - 2) * q[:, 1] ** b
            if b >= 2:
                out[:, t] += b * (b - 1) * q[:, 0] ** a * q[:, 1] ** (b - 2)
        return out / self.scale**2

    def laplacian_coefficients(self) -> np.ndarray:
        """Matrix L with Delta m_b = sum_a L[a, b] m_a (a of degree <= k-2)."""
        n2 = n_monomials(self.k - 2)
        index = {tuple(e): i for i, e in enumerate(self.exponents)}
        L = np.zeros((n2, self.n_terms))
        for t, (a, b) in enumerate(self.exponents):
            if a >= 2:
                L[index[(a - 2, b)], t] += a * (a - 1)
            if b >= 2:
                L[index[(a, b - 2)], t] += b * (b - 1)
        return L / self.scale**2


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int


def triangulate_polygon(coords) -> np.ndarray:
    """Ear-clipping triangulation of a simple CCW polygon.

    Returns an (m, 3) array of indices into coords.  Handles non-convex
    cells; flat (collinear) corners are clipped away as zero-area ears.
    """
    coords = np.asarray(coords, dtype=float)
    n = len(coords)
    if n < 3:
        raise ValueError("polygon needs at least 3 vertices")
    if n == 3:
        return np.array([[0, 1, 2]])
    scale = polygon_diameter(coords)
    eps = 1e-12 * scale * scale
    active = list(range(n))
    triangles = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def point_in_or_on_tri(p, a, b, c):
        # inside-or-on: a vertex on the ear boundary must block the ear,
        # otherwise a reentrant corner sitting exactly on the diagonal
        # produces overlapping triangles
        d1 = cross(a, b, p)
        d2 = cross(b, c, p)
        d3 = cross(c, a, p)
        return d1 >= -eps and d2 >= -eps and d3 >= -eps

    guard = 0
    while len(active) > 3:
        guard += 1
        if guard > 2 * n * n:
            raise ValueError("ear clipping failed: polygon may self-intersect")
        clipped = False
        # strictly convex ears first; flat corners popped as a fallback
        # (removing a collinear subdivision point leaves the boundary intact)
        for pass_flat in (False, True):
            for idx in range(len(active)):
                i0 = active[idx - 1]
                i1 = active[idx]
                i2 = active[(idx + 1) % len(active)]
                c = cross(coords[i0], coords[i1], coords[i2])
                if not pass_flat:
                    if c <= eps:
                        continue
                    if any(
                        point_in_or_on_tri(
                            coords[j], coords[i0], coords[i1], coords[i2]
                        )
                        for j in active
                        if j not in (i0, i1, i2)
                    ):
                        continue
                    triangles.append((i0, i1, i2))
                else:
                    if abs(c) > eps:
                        continue
                active.pop(idx)
                clipped = True
                break
            if clipped:
                break
        if not clipped:
            raise ValueError("ear clipping failed: polygon may self-intersect")
    a, b, c = active
    if abs(cross(coords[a], coords[b], coords[c])) > eps:
        triangles.append((a, b, c))
    return np.array(triangles, dtype=int).reshape(-1, 3)


def _triangle_rule(degree: int):
    """Conical-product Gauss rule on the reference triangle (0,0),(1,0),(0,1).

    Exact for total degree <= 2n-1 with n^2 points; all weights positive and
    all points interior.
    """
    n = max(1, (degree + 2) // 2)
    tj, wj = roots_jacobi(n, 1.0, 0.0)
    tl, wl = leggauss(n)
    a = 0.5 * (tj + 1.0)
    wa = 0.25 * wj
    b = 0.5 * (tl + 1.0)
    wb = 0.5 * wl
    x = np.repeat(a, n)
    y = np.tile(b, n) * (1.0 - x)
    w = np.repeat(wa, n) * np.tile(wb, n)
    return np.column_stack([x, y]), w


def polygon_quadrature(coords, degree: int) -> QuadratureRule:
    """Composite Gauss rule on an ear-clipping triangulation of the cell."""
    if degree < 0:
        raise ValueError("exactness degree must be >= 0")
    if degree > MAX_EXACTNESS:
        raise ValueError(
            f"quadrature exactness {degree} exceeds the supported maximum "
            f"{MAX_EXACTNESS}"
        )
    coords = np.asarray(coords, dtype=float)
    tris = triangulate_polygon(coords)
    ref_pts, ref_w = _triangle_rule(degree)
    points, weights = [], []
    for tri in tris:
        v0, v1, v2 = coords[tri]
        area2 = (v1[0] - v0[0]) * (v2[1] - v0[1]) - (v1[1] - v0[1]) * (v2[0] - v0[0])
        pts = v0 + np.outer(ref_pts[:, 0], v1 - v0) + np.outer(ref_pts[:, 1], v2 - v0)
        points.append(pts)
        weights.append(ref_w * area2)
    return QuadratureRule(np.vstack(points), np.concatenate(weights), degree)


def edge_gauss(p0, p1, degree: int):
    """Gauss points and weights on the segment p0 -> p1, exact to degree."""
    n = max(1, (degree + 2) // 2)
    t, w = leggauss(n)
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    mid = 0.5 * (p0 + p1)
    half = 0.5 * (p1 - p0)
    pts = mid + np.outer(t, half)
    length = np.linalg.norm(p1 - p0)
    return pts, 0.5 * length * w


def monomial_gram(coords, k: int, basis: ScaledMonomialBasis | None = None):
    """Gram matrix H with H[a, b] = integral of m_a m_b over the cell."""
    coords = np.asarray(coords, dtype=float)
    if basis is None:
        basis = ScaledMonomialBasis.for_cell(coords, k)
    quad = polygon_quadrature(coords, 2 * k)
    vals = basis.eval(quad.points)
    H = vals.T @ (quad.weights[:, None] * vals)
    return 0.5 * (H + H.T)
