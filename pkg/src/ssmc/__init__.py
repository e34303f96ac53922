"""Sparse submodule clustering.

Clustering of data drawn from a union of group-invariant subspaces by
group-sparse self-representation, with tools for the identifiability
geometry behind it.
"""
from .clustering import (AffinityError, AffinityMatrix, ClusteringResult, build_affinity,
                         score_clustering, spectral_cluster)
from .group_algebra import (GroupDictionary, GroupRepresentation, RepresentationError,
                            build_cyclic_shift_rep, build_group_dictionary, direct_product,
                            flatten_group, norm_1_2, norm_inf_2, reshape_group,
                            rep_from_descriptor, trivial_rep)
from .kernels import BACKEND
from .solver import (CertificateError, InfeasibleError, SolveResult, SolverConfig,
                     check_certificate, solve, solve_dual, solve_primal)
from .synthetic import (SubmoduleBasis, SyntheticDataset, generate_submodule_basis,
                        sample_orbit_model, sample_semi_random)

__version__ = "0.1.0"

__all__ = [
    "AffinityError", "AffinityMatrix", "BACKEND", "CertificateError", "ClusteringResult",
    "GroupDictionary", "GroupRepresentation", "InfeasibleError", "RepresentationError",
    "SolveResult", "SolverConfig", "SubmoduleBasis", "SyntheticDataset", "build_affinity",
    "build_cyclic_shift_rep", "build_group_dictionary", "check_certificate",
    "direct_product", "flatten_group", "generate_submodule_basis", "norm_1_2", "norm_inf_2",
    "rep_from_descriptor", "reshape_group", "sample_orbit_model", "sample_semi_random",
    "score_clustering", "solve", "solve_dual", "solve_primal", "spectral_cluster",
    "trivial_rep",
]
