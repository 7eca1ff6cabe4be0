"""Virtual element solver for the Laplace eigenvalue problem on polygonal meshes."""

from .mesh import (
    Domain,
    MeshError,
    MeshFormatError,
    MeshGenerationError,
    MeshQualityReport,
    PolygonalMesh,
    build_cartesian_mesh,
    build_voronoi_mesh,
    domain_by_name,
    load_mesh,
    lshape_domain,
    save_mesh,
    square_domain,
    validate_mesh,
)

__all__ = [
    "Domain",
    "MeshError",
    "MeshFormatError",
    "MeshGenerationError",
    "MeshQualityReport",
    "PolygonalMesh",
    "build_cartesian_mesh",
    "build_voronoi_mesh",
    "domain_by_name",
    "load_mesh",
    "lshape_domain",
    "save_mesh",
    "square_domain",
    "validate_mesh",
]
