"""Learning mixtures of spherical Gaussians with clustering, span grids and Scheffe tournaments."""

from .cluster import (
    Clustering,
    Thresholds,
    coarse_single_linkage,
    estimate_variance,
    make_thresholds,
    recursive_spectral_cluster,
    single_linkage_1d,
)
from .distance import L1Estimate, bhattacharyya_1d, l1_mc, l1_quadrature_1d, l1_upper_bound_product
from .estimator import (
    CandidateOverflowError,
    EstimatorConfig,
    Report,
    build_candidates,
    build_candidates_1d,
    cluster_span,
    learn_1d,
    learn_k_sphere,
)
from .linalg import NonConvergenceError, ScatterStats, accumulate, centered_covariance, spectral_norm, top_eigs
from .model import Component, Dataset, Mixture, load_dataset, load_mixture, log_pdf, sample, save_dataset, save_mixture
from .scheffe import CandidateFamily, GridFamily, game_budget, modified_scheffe, modified_scheffe_amplified, scheffe_pair

__version__ = "0.1.0"
