"""Blind deconvolution from multiple diverse inputs via lifting and low-rank recovery."""

__version__ = "0.1.0"

from .certificate import (
    ProjectorContext,
    golfing_certificate,
    injectivity_margin,
    iterate_coherences,
    project_P,
    project_R,
    project_R_perp,
    verify_optimality,
)
from .coherence import build_partition, build_S, mu0_sq, mu_max_sq, rho0_sq, rip_deviation, theorem_bound
from .experiments import GridSpec, TrialConfig, phase_grid, run_trial, summarize
from .instance import make_instance
from .lifting import adjoint_A, apply_A, apply_A_factored, apply_A_sub, build_rows, operator_norm_A
from .solver import SolverConfig, align_scale, classify_recovery, extract_rank1, solve_blind_deconv
from .spectral import circ_conv, dft, gen_generic_basis, gen_identity_subset_basis, gen_sparse_coeff, idft

__all__ = [
    "GridSpec",
    "ProjectorContext",
    "SolverConfig",
    "TrialConfig",
    "adjoint_A",
    "align_scale",
    "apply_A",
    "apply_A_factored",
    "apply_A_sub",
    "build_S",
    "build_partition",
    "build_rows",
    "circ_conv",
    "classify_recovery",
    "dft",
    "extract_rank1",
    "gen_generic_basis",
    "gen_identity_subset_basis",
    "gen_sparse_coeff",
    "golfing_certificate",
    "idft",
    "injectivity_margin",
    "iterate_coherences",
    "make_instance",
    "mu0_sq",
    "mu_max_sq",
    "operator_norm_A",
    "phase_grid",
    "project_P",
    "project_R",
    "project_R_perp",
    "rho0_sq",
    "rip_deviation",
    "run_trial",
    "solve_blind_deconv",
    "summarize",
    "theorem_bound",
    "verify_optimality",
]
