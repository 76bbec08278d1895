"""Staged continuous-time quantum-walk search on (weighted) Cayley trees.

The search Hamiltonian ``H = -gamma L - |a><a|`` on a tree of height ``r``
reduces exactly to ``(r+1)(r+2)/2`` orbit states, so even trees with
millions of vertices are simulated in a handful of dimensions.
"""

from __future__ import annotations

from .connectivity import ConnectivityReport, connectivity_report
from .experiments import (
    ExperimentRecord,
    gamma_deviation_study,
    noise_study,
    perturbation_study,
    rerun,
    sweep_branching,
    sweep_size_small_M,
)
from .graph import (
    CayleySpec,
    ConnectGroupToRoot,
    ConnectHalfGroupsToRoot,
    GraphError,
    RandomBinaryWeights,
    ResizeGroup,
    ResizeHalfGroups,
    ReweighEdge,
    WeightedGraph,
    add_gaussian_noise,
    build_cayley,
    build_geometric_cayley,
    build_joined_complete,
    graph_from_spec,
    perturb,
)
from .operators import (
    ConvergenceError,
    NumericalError,
    SpectralDecomposition,
    eigendecompose,
    evolve_exact,
    evolve_krylov,
    jacobi_eigh,
    laplacian,
    search_hamiltonian,
)
from .search import (
    NoCrossingError,
    SearchSchedule,
    Stage,
    find_critical_gamma,
    overlap_sweep,
    plan_schedule,
    run_search,
)
from .subspace import OrbitBasis, ReducedSystem, SymmetryBroken, orbit_reduce

__version__ = "0.1.0"

__all__ = [
    "ConnectivityReport",
    "connectivity_report",
    "ExperimentRecord",
    "gamma_deviation_study",
    "noise_study",
    "perturbation_study",
    "rerun",
    "sweep_branching",
    "sweep_size_small_M",
    "CayleySpec",
    "ConnectGroupToRoot",
    "ConnectHalfGroupsToRoot",
    "GraphError",
    "RandomBinaryWeights",
    "ResizeGroup",
    "ResizeHalfGroups",
    "ReweighEdge",
    "WeightedGraph",
    "add_gaussian_noise",
    "build_cayley",
    "build_geometric_cayley",
    "build_joined_complete",
    "graph_from_spec",
    "perturb",
    "ConvergenceError",
    "NumericalError",
    "SpectralDecomposition",
    "eigendecompose",
    "evolve_exact",
    "evolve_krylov",
    "jacobi_eigh",
    "laplacian",
    "search_hamiltonian",
    "NoCrossingError",
    "SearchSchedule",
    "Stage",
    "find_critical_gamma",
    "overlap_sweep",
    "plan_schedule",
    "run_search",
    "OrbitBasis",
    "ReducedSystem",
    "SymmetryBroken",
    "orbit_reduce",
]
