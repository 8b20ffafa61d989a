"""Semilinear heat equations on weighted graphs: lifespans, blow-up and their bounds."""

__version__ = "0.1.0"

from .bounds import (  # noqa: E402
    BoundsReport,
    compute_bounds,
    density_bound,
    density_profile,
    finite_graph_threshold,
    heat_kernel_upper_bound,
    kaplan_bound,
    kaplan_bound_auto,
    lower_bound_basic,
    sandwich_finite,
)
from .estimators import HeatKernelSmoother, LifespanEstimator  # noqa: E402
from .evolution import (  # noqa: E402
    comparison_check,
    duhamel_residual,
    estimate_lifespan,
    integrate,
    monotone_iterate,
)
from .graph import (  # noqa: E402
    DomainSubset,
    GraphFamily,
    WeightedGraph,
    build_graph,
    complete_graph,
    cycle_graph,
    graph_constants,
    lattice_ball,
    path_graph,
    random_connected_graph,
    tree_ball,
)
from .heat_kernel import heat_kernel, kernel_audit  # noqa: E402
from .operators import VertexFunction, cde_check, gamma, gamma2, laplacian_apply  # noqa: E402
from .spectral import dirichlet_ground_state, ec_witness_search, ghost_vertex_lambda1  # noqa: E402

__all__ = [
    "BoundsReport",
    "DomainSubset",
    "GraphFamily",
    "HeatKernelSmoother",
    "LifespanEstimator",
    "VertexFunction",
    "WeightedGraph",
    "build_graph",
    "cde_check",
    "comparison_check",
    "complete_graph",
    "compute_bounds",
    "cycle_graph",
    "density_bound",
    "density_profile",
    "dirichlet_ground_state",
    "duhamel_residual",
    "ec_witness_search",
    "estimate_lifespan",
    "finite_graph_threshold",
    "gamma",
    "gamma2",
    "ghost_vertex_lambda1",
    "graph_constants",
    "heat_kernel",
    "heat_kernel_upper_bound",
    "integrate",
    "kaplan_bound",
    "kaplan_bound_auto",
    "kernel_audit",
    "laplacian_apply",
    "lattice_ball",
    "lower_bound_basic",
    "monotone_iterate",
    "path_graph",
    "random_connected_graph",
    "sandwich_finite",
    "tree_ball",
]
