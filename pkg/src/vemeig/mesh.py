"""Polygonal meshes of the square and L-shaped benchmark domains.

Meshes are immutable after construction: vertex coordinates, cell cycles
(counterclockwise), and the derived edge table are frozen numpy arrays, so a
mesh can be shared read-only across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi, cKDTree

MERGE_TOL = 1e-12  # vertex dedup tolerance, absolute in domain units


class MeshError(Exception):
    pass


class MeshFormatError(MeshError):
    """Raised when a mesh file cannot be parsed or is inconsistent."""


class MeshGenerationError(MeshError):
    """Raised when a generator produces a degenerate configuration."""


@dataclass(frozen=True)
class Domain:
    """Axis-aligned domain given as a union of non-overlapping rectangles.

    Rectangles are (x0, y0, x1, y1) tuples.  The square benchmark domain is a
    single rectangle; the L-shaped one is the union of three unit squares.
    """

    name: str
    rects: tuple

    @property
    def area(self) -> float:
        return sum((x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in self.rects)

    @property
    def bbox(self):
        xs0, ys0, xs1, ys1 = zip(*self.rects)
        return min(xs0), min(ys0), max(xs1), max(ys1)

    def contains(self, points, pad=0.0):
        """Boolean mask of points lying inside the domain (with margin pad)."""
        pts = np.atleast_2d(points)
        inside = np.zeros(len(pts), dtype=bool)
        for x0, y0, x1, y1 in self.rects:
            inside |= (
                (pts[:, 0] >= x0 - pad)
                & (pts[:, 0] <= x1 + pad)
                & (pts[:, 1] >= y0 - pad)
                & (pts[:, 1] <= y1 + pad)
            )
        return inside


def square_domain(side: float = np.pi) -> Domain:
    """Square (0, side)^2; the benchmark uses side = pi."""
    return Domain("square", ((0.0, 0.0, float(side), float(side)),))


def lshape_domain() -> Domain:
    """L-shaped domain (-1,1)^2 minus the quadrant (0,1) x (-1,0)."""
    return Domain(
        "lshape",
        (
            (-1.0, -1.0, 0.0, 0.0),
            (-1.0, 0.0, 0.0, 1.0),
            (0.0, 0.0, 1.0, 1.0),
        ),
    )


def domain_by_name(name: str) -> Domain:
    if name == "square":
        return square_domain()
    if name == "lshape":
        return lshape_domain()
    raise MeshError(f"unsupported domain descriptor: {name!r}")


def polygon_area(coords) -> float:
    """Signed area (shoelace); positive for counterclockwise polygons."""
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(coords):
    """Area centroid of a simple polygon."""
    x, y = coords[:, 0], coords[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * np.sum(cross)
    if abs(a) < 1e-300:
        return coords.mean(axis=0)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


def polygon_diameter(coords) -> float:
    """Maximum pairwise vertex distance."""
    d = coords[:, None, :] - coords[None, :, :]
    return float(np.sqrt((d**2).sum(axis=2)).max())


class PolygonalMesh:
    """2D polygonal mesh: vertices, CCW cell cycles, derived oriented edges.

    Edges are unique vertex pairs stored as (lo, hi) with lo < hi; this fixes
    a global orientation (lo -> hi) used for edge-moment sign conventions.
    """

    def __init__(self, vertices, cells):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        self.cells = [np.asarray(c, dtype=int) for c in cells]
        n_v = len(self.vertices)
        for ci, cell in enumerate(self.cells):
            if len(cell) < 3:
                raise MeshError(f"cell {ci} has fewer than 3 vertices")
            if cell.min() < 0 or cell.max() >= n_v:
                bad = cell[(cell < 0) | (cell >= n_v)][0]
                raise MeshFormatError(f"cell {ci} references missing vertex {bad}")
        self._derive()
        self.vertices.flags.writeable = False
        for c in self.cells:
            c.flags.writeable = False

    def _derive(self):
        edge_set = {}
        cell_edge_ids = []
        cell_edge_dirs = []
        for cell in self.cells:
            ids, dirs = [], []
            for a, b in zip(cell, np.roll(cell, -1)):
                key = (min(a, b), max(a, b))
                if key not in edge_set:
                    edge_set[key] = 0
                ids.append(key)
                dirs.append(1 if a < b else -1)
            cell_edge_ids.append(ids)
            cell_edge_dirs.append(np.array(dirs, dtype=int))
        edges = np.array(sorted(edge_set), dtype=int).reshape(-1, 2)
        index = {tuple(e): i for i, e in enumerate(edges)}
        self.edges = edges
        self.cell_edge_ids = [
            np.array([index[k] for k in ids], dtype=int) for ids in cell_edge_ids
        ]
        self.cell_edge_dirs = cell_edge_dirs
        counts = np.zeros(len(edges), dtype=int)
        for ids in self.cell_edge_ids:
            counts[ids] += 1
        self.edge_cell_counts = counts
        self.boundary_edge_flags = counts == 1
        self.cell_areas = np.array(
            [polygon_area(self.vertices[c]) for c in self.cells]
        )
        self.cell_centroids = np.array(
            [polygon_centroid(self.vertices[c]) for c in self.cells]
        )
        self.cell_diameters = np.array(
            [polygon_diameter(self.vertices[c]) for c in self.cells]
        )
        for arr in (
            self.edges,
            self.boundary_edge_flags,
            self.cell_areas,
            self.cell_centroids,
            self.cell_diameters,
            self.edge_cell_counts,
        ):
            arr.flags.writeable = False

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        """Mesh size: maximum cell diameter."""
        return float(self.cell_diameters.max())

    def cell_coords(self, ci: int):
        return self.vertices[self.cells[ci]]

    def edge_length(self, ei: int) -> float:
        a, b = self.edges[ei]
        return float(np.linalg.norm(self.vertices[b] - self.vertices[a]))

    def boundary_vertex_flags(self):
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.edges[self.boundary_edge_flags].ravel()] = True
        return flags


@dataclass
class MeshQualityReport:
    """Pure derived quality data; never mutates the mesh it describes."""

    min_edge_to_diameter_ratio: float
    max_vertices_per_cell: int
    n_nonconvex_cells: int
    orientation_failures: list = field(default_factory=list)
    nonsimple_cells: list = field(default_factory=list)
    nonmanifold_edges: int = 0

    @property
    def is_valid(self) -> bool:
        return (
            not self.orientation_failures
            and not self.nonsimple_cells
            and self.nonmanifold_edges == 0
        )


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """Proper intersection test for open segments (shared endpoints excluded)."""

    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(p3, p4, p1)
    d2 = orient(p3, p4, p2)
    d3 = orient(p1, p2, p3)
    d4 = orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _cell_is_simple(coords) -> bool:
    n = len(coords)
    for i in range(n):
        a1, a2 = coords[i], coords[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = coords[j], coords[(j + 1) % n]
            if _segments_intersect(a1, a2, b1, b2):
                return False
    return True


def _cell_is_convex(coords) -> bool:
    n = len(coords)
    v = np.roll(coords, -1, axis=0) - coords
    cross = v[:, 0] * np.roll(v, -1, axis=0)[:, 1] - v[:, 1] * np.roll(v, -1, axis=0)[:, 0]
    scale = np.abs(v).max() ** 2 + 1e-300
    return bool((cross >= -1e-12 * scale).all())


def validate_mesh(mesh: PolygonalMesh) -> MeshQualityReport:
    """Evaluate orientation, manifoldness, simplicity, and shape ratios.

    Violations are reported, not raised.
    """
    orientation_failures = [
        ci for ci in range(mesh.n_cells) if mesh.cell_areas[ci] <= 0.0
    ]
    nonsimple = [
        ci for ci in range(mesh.n_cells) if not _cell_is_simple(mesh.cell_coords(ci))
    ]
    nonconvex = sum(
        1 for ci in range(mesh.n_cells) if not _cell_is_convex(mesh.cell_coords(ci))
    )
    nonmanifold = int(np.sum(mesh.edge_cell_counts > 2))
    ratio = np.inf
    for ci in range(mesh.n_cells):
        h_p = mesh.cell_diameters[ci]
        if h_p <= 0:
            ratio = 0.0
            continue
        for ei in mesh.cell_edge_ids[ci]:
            ratio = min(ratio, mesh.edge_length(ei) / h_p)
    return MeshQualityReport(
        min_edge_to_diameter_ratio=float(ratio),
        max_vertices_per_cell=max(len(c) for c in mesh.cells),
        n_nonconvex_cells=nonconvex,
        orientation_failures=orientation_failures,
        nonsimple_cells=nonsimple,
        nonmanifold_edges=nonmanifold,
    )


def build_cartesian_mesh(domain: Domain, n: int) -> PolygonalMesh:
    """Axis-aligned square cells covering the domain exactly.

    For the square domain n is the number of cells per side; for the L-shape
    n is the number of cells per unit side (3 n^2 cells in total).
    """
    if n < 1:
        raise MeshError("n must be >= 1")
    x0, y0, x1, y1 = domain.bbox
    if domain.name == "square":
        nx = ny = n
    else:
        # cells per unit length must tile every rectangle exactly
        nx = int(round((x1 - x0) * n))
        ny = int(round((y1 - y0) * n))
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xs = x0 + hx * np.arange(nx + 1)
    ys = y0 + hy * np.arange(ny + 1)
    vid = -np.ones((nx + 1, ny + 1), dtype=int)
    vertices, cells = [], []
    for j in range(ny):
        for i in range(nx):
            center = np.array([[xs[i] + 0.5 * hx, ys[j] + 0.5 * hy]])
            if not domain.contains(center)[0]:
                continue
            quad = []
            for di, dj in ((0, 0), (1, 0), (1, 1), (0, 1)):
                if vid[i + di, j + dj] < 0:
                    vid[i + di, j + dj] = len(vertices)
                    vertices.append((xs[i + di], ys[j + dj]))
                quad.append(vid[i + di, j + dj])
            cells.append(quad)
    return PolygonalMesh(np.array(vertices), cells)


def _sutherland_hodgman(poly, rect):
    """Clip a polygon against an axis-aligned rectangle."""
    x0, y0, x1, y1 = rect

    def clip(points, inside, intersect):
        out = []
        n = len(points)
        for i in range(n):
            cur, nxt = points[i], points[(i + 1) % n]
            cin, nin = inside(cur), inside(nxt)
            if cin:
                out.append(cur)
                if not nin:
                    out.append(intersect(cur, nxt))
            elif nin:
                out.append(intersect(cur, nxt))
        return out

    def x_cut(level):
        def inter(p, q):
            t = (level - p[0]) / (q[0] - p[0])
            return (level, p[1] + t * (q[1] - p[1]))

        return inter

    def y_cut(level):
        def inter(p, q):
            t = (level - p[1]) / (q[1] - p[1])
            return (p[0] + t * (q[0] - p[0]), level)

        return inter

    pts = [tuple(p) for p in poly]
    pts = clip(pts, lambda p: p[0] >= x0, x_cut(x0))
    if pts:
        pts = clip(pts, lambda p: p[0] <= x1, x_cut(x1))
    if pts:
        pts = clip(pts, lambda p: p[1] >= y0, y_cut(y0))
    if pts:
        pts = clip(pts, lambda p: p[1] <= y1, y_cut(y1))
    return np.array(pts) if pts else np.zeros((0, 2))


def _merge_points(points, tol=MERGE_TOL):
    """Map each point to a canonical representative within tol (union-find)."""
    pts = np.asarray(points)
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    tree = cKDTree(pts)
    for i, j in sorted(tree.query_pairs(tol)):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return np.array([find(i) for i in range(len(pts))])


def _union_pieces(pieces):
    """Union polygons glued along shared (opposite) edges.

    Shared seam edges appear twice with opposite direction and cancel; the
    remaining directed edges must stitch into one cycle.
    """
    if len(pieces) == 1:
        return pieces[0]
    pts = np.vstack(pieces)
    canon = _merge_points(pts)
    edges = {}
    offset = 0
    for piece in pieces:
        n = len(piece)
        ids = canon[offset : offset + n]
        offset += n
        for a, b in zip(ids, np.roll(ids, -1)):
            if a == b:
                continue
            if (b, a) in edges:
                del edges[(b, a)]
            else:
                edges[(a, b)] = True
    if not edges:
        return np.zeros((0, 2))
    succ = {}
    for a, b in edges:
        if a in succ:
            raise MeshGenerationError("clipped cell union is not a simple cycle")
        succ[a] = b
    start = min(succ)
    cycle = [start]
    cur = succ[start]
    while cur != start:
        cycle.append(cur)
        if cur not in succ or len(cycle) > len(edges) + 1:
            raise MeshGenerationError("clipped cell is disconnected or open")
        cur = succ[cur]
    if len(cycle) != len(edges):
        raise MeshGenerationError("clipped cell is disconnected")
    return pts[cycle]


def _snap_to_lines(poly, rect, tol=MERGE_TOL):
    """Snap coordinates onto the rectangle edge lines they nearly lie on.

    Mirrored seeds put cell boundaries exactly on these lines; qhull leaves
    them within roundoff, which would otherwise produce spurious clip
    intersections at arbitrary positions along the line.
    """
    out = np.array(poly, dtype=float)
    x0, y0, x1, y1 = rect
    for axis, level in ((0, x0), (0, x1), (1, y0), (1, y1)):
        near = np.abs(out[:, axis] - level) < tol
        out[near, axis] = level
    return out


def _clipped_pieces(seeds, domain: Domain):
    """Per-seed convex pieces of the clipped Voronoi diagram, one per rectangle.

    Each rectangle gets its own diagram with rectangle-side seeds mirrored
    across the four edge lines, so cell boundaries land exactly on the
    rectangle edges; per-seed pieces can then be glued across the seams.
    """
    n = len(seeds)
    guards = 200.0 * np.array(
        [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)],
        dtype=float,
    )
    pieces = [[] for _ in range(n)]
    for rect in domain.rects:
        x0, y0, x1, y1 = rect
        mirrored = []
        for axis, level, sign in (
            (0, x0, 1),
            (0, x1, -1),
            (1, y0, 1),
            (1, y1, -1),
        ):
            side = sign * (seeds[:, axis] - level) >= 0
            m = seeds[side].copy()
            m[:, axis] = 2 * level - m[:, axis]
            mirrored.append(m)
        cloud = np.vstack([seeds] + mirrored + [guards])
        vor = Voronoi(cloud)
        for i in range(n):
            region = vor.regions[vor.point_region[i]]
            if -1 in region or not region:
                raise MeshGenerationError(f"unbounded Voronoi region for seed {i}")
            poly = _snap_to_lines(vor.vertices[region], rect)
            if polygon_area(poly) < 0:
                poly = poly[::-1]
            piece = _sutherland_hodgman(poly, rect)
            if len(piece) >= 3 and polygon_area(piece) > 1e-14:
                pieces[i].append(_snap_to_lines(piece, rect))
    return pieces


def _clipped_voronoi(seeds, domain: Domain):
    """Voronoi cells of the seeds clipped to the domain, one polygon per seed."""
    pieces = _clipped_pieces(seeds, domain)
    cells = []
    for i in range(len(seeds)):
        if not pieces[i]:
            raise MeshGenerationError(f"seed {i} has an empty clipped cell")
        try:
            cells.append(_union_pieces(pieces[i]))
        except MeshGenerationError as e:
            raise MeshGenerationError(f"seed {i}: {e}") from e
    return cells


def _sample_seeds(domain: Domain, n_seeds: int, rng):
    x0, y0, x1, y1 = domain.bbox
    seeds = np.zeros((n_seeds, 2))
    count = 0
    while count < n_seeds:
        batch = rng.uniform((x0, y0), (x1, y1), size=(2 * (n_seeds - count) + 8, 2))
        keep = batch[domain.contains(batch)]
        take = min(len(keep), n_seeds - count)
        seeds[count : count + take] = keep[:take]
        count += take
    return seeds


def _hex_seeds(domain: Domain, n_seeds: int, rng, jitter: float):
    """Jittered hexagonal lattice with roughly n_seeds points in the domain.

    The lattice keeps the maximum cell diameter tracking the mean (so mesh
    sizes of a refinement family scale cleanly), while the jitter controls
    cell irregularity: small values give near-centroidal meshes, values
    around 0.3 give cell shapes comparable to unrelaxed Voronoi diagrams.
    """
    x0, y0, x1, y1 = domain.bbox
    s = np.sqrt(domain.area / (n_seeds * np.sqrt(3.0) / 2.0))
    dy = s * np.sqrt(3.0) / 2.0
    pts = []
    r = 0
    y = y0 + 0.5 * dy
    while y < y1:
        x = x0 + (0.25 + 0.5 * (r % 2)) * s
        while x < x1:
            pts.append((x, y))
            x += s
        r += 1
        y += dy
    pts = np.array(pts)
    pts = pts + jitter * s * rng.standard_normal(pts.shape)
    pts[:, 0] = np.clip(pts[:, 0], x0 + 1e-6 * s, x1 - 1e-6 * s)
    pts[:, 1] = np.clip(pts[:, 1], y0 + 1e-6 * s, y1 - 1e-6 * s)
    return pts[domain.contains(pts)]


def build_voronoi_mesh(
    domain: Domain,
    n_seeds: int,
    rng_seed: int,
    lloyd_iterations: int = 3,
    init: str = "random",
    hex_jitter: float = 0.02,
) -> PolygonalMesh:
    """Clipped Voronoi mesh after Lloyd relaxation; reproducible per rng_seed.

    init="random" draws exactly n_seeds uniform points; init="hex" starts
    from a jittered hexagonal lattice with approximately n_seeds points
    (cell count equals the realized lattice size; hex_jitter controls the
    irregularity).
    """
    if n_seeds < 1:
        raise MeshError("n_seeds must be >= 1")
    rng = np.random.default_rng(rng_seed)
    if init == "random":
        seeds = _sample_seeds(domain, n_seeds, rng)
    elif init == "hex":
        seeds = _hex_seeds(domain, n_seeds, rng, hex_jitter)
    else:
        raise MeshError(f"unknown seed init {init!r}")
    for _ in range(lloyd_iterations):
        pieces = _clipped_pieces(seeds, domain)
        new_seeds = seeds.copy()
        for i, plist in enumerate(pieces):
            if not plist:
                continue
            try:
                cell = _union_pieces(plist)
            except MeshGenerationError:
                # transiently disconnected cell: relax toward its largest piece
                cell = max(plist, key=polygon_area)
            new_seeds[i] = polygon_centroid(cell)
        ok = domain.contains(new_seeds)
        seeds = np.where(ok[:, None], new_seeds, seeds)
    if n_seeds > 1:
        tree = cKDTree(seeds)
        dist, _ = tree.query(seeds, k=2)
        if dist[:, 1].min() < 1e-9:
            raise MeshGenerationError("duplicate seeds after clipping")
    cells = _clipped_voronoi(seeds, domain)
    all_pts = np.vstack(cells)
    canon = _merge_points(all_pts)
    rep_of = {}
    vertices = []
    cell_indices = []
    offset = 0
    for poly in cells:
        ids = []
        for local in range(len(poly)):
            r = canon[offset + local]
            if r not in rep_of:
                rep_of[r] = len(vertices)
                vertices.append(all_pts[r])
            ids.append(rep_of[r])
        offset += len(poly)
        dedup = [v for i, v in enumerate(ids) if v != ids[(i + 1) % len(ids)]]
        if len(dedup) < 3:
            raise MeshGenerationError("degenerate clipped cell after vertex merge")
        cell_indices.append(dedup)
    return PolygonalMesh(np.array(vertices), cell_indices)


def save_mesh(mesh: PolygonalMesh, path) -> None:
    """Write plain JSON with 17-significant-digit decimal coordinates."""
    lines = ['{', '  "vertices": [']
    for i, (x, y) in enumerate(mesh.vertices):
        comma = "," if i + 1 < mesh.n_vertices else ""
        lines.append(f"    [{x:.17g}, {y:.17g}]{comma}")
    lines.append("  ],")
    lines.append('  "cells": [')
    for i, cell in enumerate(mesh.cells):
        comma = "," if i + 1 < mesh.n_cells else ""
        lines.append("    [" + ", ".join(str(v) for v in cell) + "]" + comma)
    lines.append("  ]")
    lines.append("}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_mesh(path) -> PolygonalMesh:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise MeshFormatError(
                f"malformed mesh file {path}: line {e.lineno}: {e.msg}"
            ) from e
    for key in ("vertices", "cells"):
        if key not in doc:
            raise MeshFormatError(f"mesh file {path} missing field {key!r}")
    try:
        vertices = np.array(doc["vertices"], dtype=float)
    except (TypeError, ValueError) as e:
        raise MeshFormatError(f"mesh file {path}: bad 'vertices' field: {e}") from e
    return PolygonalMesh(vertices, doc["cells"])
