"""Closed-form singular/near-singular layer-potential integrals over flat
triangular panels, quadratic-surface corrections, and a small collocation
BEM harness built on them."""

__version__ = "0.1.0"

from .bem import (
    BemSystem,
    Regularization,
    SingularStrategy,
    assemble,
    enclosing_flux,
    evaluate_potential,
    export_solution,
    kernel_k,
    nodal_areas,
    potential_gradient,
    probe_forms,
    single_layer_matrix,
    solve,
    sphere_forms,
    sphere_identity_test,
    sphere_neumann_problem,
    torus_flux_diagnostic,
    torus_in_sphere_problem,
)
from .batch import (
    FOUR_PI,
    g_panel_entries,
    k_panel_entries,
    k_row_sums,
    panel_frames,
    tangent_frames,
)
from .curvature import (
    FundamentalForm,
    SdfProbe,
    estimate_fundamental_forms,
    estimate_normals,
    shape_operator,
    sphere_probe,
    torus_probe,
)
from .errors import (
    ConvergenceFailure,
    DegenerateTriangle,
    DivergentIntegral,
    MeshError,
    TripanelError,
)
from .geometry import (
    Panel,
    PolarDecomposition,
    Target,
    decompose_polar,
    normalize_frame,
    orient_planar,
    rotation_to_z,
)
from .mesh_io import (
    SurfaceMesh,
    generate_fibonacci_sphere_mesh,
    generate_latlong_sphere_mesh,
    generate_sphere_mesh,
    generate_torus_mesh,
    load_mesh,
    save_mesh,
    signed_volume,
)
from .oracle import (
    QuadratureResult,
    adaptive_patch,
    adaptive_triangle,
    duffy_integrate,
    sphere_patch_chart,
    triangle_chart,
)
from .panel_integrals import (
    PanelPolynomial,
    integrate_g_panel,
    integrate_k_panel,
)
from .qsa import foot_point, qsa_off_boundary, qsa_on_boundary, qsa_vertex

__all__ = [
    "BemSystem",
    "ConvergenceFailure",
    "DegenerateTriangle",
    "DivergentIntegral",
    "FOUR_PI",
    "FundamentalForm",
    "MeshError",
    "Panel",
    "PanelPolynomial",
    "PolarDecomposition",
    "QuadratureResult",
    "Regularization",
    "SdfProbe",
    "SingularStrategy",
    "SurfaceMesh",
    "Target",
    "TripanelError",
    "adaptive_patch",
    "adaptive_triangle",
    "assemble",
    "decompose_polar",
    "duffy_integrate",
    "enclosing_flux",
    "estimate_fundamental_forms",
    "estimate_normals",
    "evaluate_potential",
    "export_solution",
    "foot_point",
    "g_panel_entries",
    "generate_fibonacci_sphere_mesh",
    "generate_latlong_sphere_mesh",
    "generate_sphere_mesh",
    "generate_torus_mesh",
    "integrate_g_panel",
    "integrate_k_panel",
    "k_panel_entries",
    "k_row_sums",
    "kernel_k",
    "load_mesh",
    "nodal_areas",
    "normalize_frame",
    "orient_planar",
    "panel_frames",
    "potential_gradient",
    "probe_forms",
    "qsa_off_boundary",
    "qsa_on_boundary",
    "qsa_vertex",
    "rotation_to_z",
    "save_mesh",
    "shape_operator",
    "signed_volume",
    "single_layer_matrix",
    "solve",
    "sphere_forms",
    "sphere_identity_test",
    "sphere_neumann_problem",
    "sphere_patch_chart",
    "sphere_probe",
    "tangent_frames",
    "torus_flux_diagnostic",
    "torus_in_sphere_problem",
    "torus_probe",
    "triangle_chart",
]
