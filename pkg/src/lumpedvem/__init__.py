"""Mass-lumped virtual element method with explicit SSP Runge-Kutta time
integration for the 2D heat equation on general polygonal meshes."""

__version__ = "0.1.0"

from .mesh import (  # noqa: F401
    Mesh,
    CellGeometry,
    MeshStats,
    MeshFormatError,
    generate_mesh,
    cell_geometry,
    mesh_stats,
    mesh_io_read,
    mesh_io_write,
)
from .poly import (  # noqa: F401
    MonomialBasis,
    monomial_basis,
    monomial_eval,
    polygon_moment,
    monomial_grams,
    edge_legendre_eval,
    integrate_polygon,
)
from .projectors import (  # noqa: F401
    DofLayout,
    DofMap,
    ProjectorPack,
    build_dof_layout,
    build_dof_matrix,
    build_energy_projector,
    build_l2_projector,
    build_projector_pack,
    build_mesh_packs,
    interpolate_dofs,
)
