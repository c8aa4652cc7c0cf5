"""Covariance estimation under latent factor confounding (RSVP and baselines)."""

from .estimators import (
    CovEstimate,
    SubsampleConfig,
    bai_ng_select,
    default_subsample_size,
    empirical_covariance,
    pca_removal,
    rsvp,
    rsvp_split,
    rsvp_sub,
    spectral_estimate,
)
from .graph import (
    Cpdag,
    NodewiseFit,
    ci_test,
    cig_estimate,
    cpdag_diagnostics,
    cpdag_orient,
    nodewise_lasso,
    partial_correlation,
    pc_skeleton,
    threshold_support,
)
from .linalg import SvdResult, center_columns, row_space_projection, sym_eig, thin_svd
from .metrics import EdgeSet, ScaleFit, best_kappa_frobenius, best_kappa_linf, jaccard, offdiag_correlation, top_edges
from .simulation import (
    Diagnostics,
    GroundTruth,
    ScenarioSpec,
    build_scenario_sigma,
    expected_scale_profile,
    make_ground_truth,
    population_diagnostics,
    sample_dataset,
    sample_loadings,
)

__version__ = "0.1.0"
