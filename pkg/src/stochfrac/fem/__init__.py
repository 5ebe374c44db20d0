"""Lowest-order finite elements for the coupled displacement, hardening and damage fields."""

from .assembly import (
    SparsePattern,
    assemble_alpha,
    assemble_d,
    assemble_u,
    history_candidate,
    interpolate,
    point_fields,
    potential_alpha_terms,
    potential_d,
    potential_mech,
    potential_u,
    reaction_force,
    reaction_vector,
    strain,
    update_history,
)
from .mesh import ElementGeometry, Mesh, build_structured_mesh, element_geometry, reference_rule
from .problem import (
    Dirichlet,
    DiscreteProblem,
    ElementMaterials,
    FieldLayout,
    Neumann,
    ProblemState,
    assign_materials,
    build_layout,
    cell_index,
    make_problem,
    scale_params,
    soft_void,
)
from .vtk import vtk_text, write_vtk
