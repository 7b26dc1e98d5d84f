"""Finite element solvers with diagonal reaction quadrature on barycentric duals.

The package builds simplicial and tensor-product meshes, their barycentric
dual decompositions, diagonal quadrature rules for discontinuous reaction
coefficients, monotone edge-average transport operators, and the study
harness that measures convergence against a high resolution radial reference.
"""

from .mesh import (
    SimplicialMesh,
    TensorMesh,
    ElementGeometry,
    generate_interval_mesh,
    generate_disk_mesh,
    tensor_product_mesh,
    element_geometry,
    element_geometry_arrays,
    mesh_size,
    nondegeneracy_ratio,
    save_mesh,
    load_mesh,
)
from .dual import DualMesh, DualReport, barycentric_dual, tensor_dual, verify_dual_identities
from .region import (
    INTERIOR,
    INTERFACE,
    EXTERIOR,
    RegionSet,
    ElementClassification,
    ball_region,
    halfplane_region,
    generic_region,
    classify_elements,
    ball_polygon_area,
    region_polygon_area,
    mc_integrate_piece,
    reference_region_integral,
)
from .quadrature import (
    CoefficientSplit,
    ReactionWeights,
    reaction_weights,
    apply_Q,
    mass_lump,
    local_error,
)
from .assembly import (
    LinearSystem,
    MMatrixReport,
    bernoulli,
    assemble_p1_stiffness,
    assemble_eafe,
    assemble_reaction_diagonal,
    assemble_galerkin_reaction,
    assemble_load,
    eliminate_dirichlet,
    kronecker_assemble,
    check_m_matrix,
    dump_matrix,
)
from .solver import (
    SolveReport,
    FeField,
    solve,
    discrete_l2_norm,
    discrete_l2_relative_error,
    h1_seminorm_diff,
    interpolate,
    evaluate,
)
from .radial import RadialSolution, solve_radial, eval_radial
from .studies import (
    StudyConfig,
    StudyReport,
    estimate_rate,
    run_convergence,
    run_supercloseness,
    run_local_orders,
    run_verify,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "SimplicialMesh", "TensorMesh", "ElementGeometry",
    "generate_interval_mesh", "generate_disk_mesh", "tensor_product_mesh",
    "element_geometry", "element_geometry_arrays", "mesh_size",
    "nondegeneracy_ratio", "save_mesh", "load_mesh",
    "DualMesh", "DualReport", "barycentric_dual", "tensor_dual", "verify_dual_identities",
    "INTERIOR", "INTERFACE", "EXTERIOR",
    "RegionSet", "ElementClassification", "ball_region", "halfplane_region",
    "generic_region", "classify_elements", "ball_polygon_area",
    "region_polygon_area", "mc_integrate_piece", "reference_region_integral",
    "CoefficientSplit", "ReactionWeights", "reaction_weights", "apply_Q",
    "mass_lump", "local_error",
    "LinearSystem", "MMatrixReport", "bernoulli", "assemble_p1_stiffness",
    "assemble_eafe", "assemble_reaction_diagonal", "assemble_galerkin_reaction",
    "assemble_load", "eliminate_dirichlet", "kronecker_assemble",
    "check_m_matrix", "dump_matrix",
    "SolveReport", "FeField", "solve", "discrete_l2_norm",
    "discrete_l2_relative_error", "h1_seminorm_diff", "interpolate", "evaluate",
    "RadialSolution", "solve_radial", "eval_radial",
    "StudyConfig", "StudyReport", "estimate_rate", "run_convergence",
    "run_supercloseness", "run_local_orders", "run_verify", "write_csv",
    "__version__",
]
