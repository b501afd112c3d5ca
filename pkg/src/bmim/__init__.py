"""Bayesian multiple index models for exposure-mixture regression.

Fits kernel-machine regressions over weighted exposure indices with
spike-and-slab selection on the component weights. The single-index model,
grouped multi-index models, and the one-index-per-exposure kernel machine
are all the same sampler under different index partitions; a quantile
g-computation comparator and a simulation harness round out the toolkit.
"""

__version__ = "0.1.0"

from .analysis import (SurfaceEstimate, WeightSummary, compute_pips,
                       conditional_surface_moments, decompose_weights,
                       format_contrast, indexwise_curve, interaction_grid,
                       overall_contrast, predict_surface)
from .comparators import QgcFit, named_configuration, qgc_fit, qgc_weights
from .data import (DataError, Dataset, IndexSpec, StandardizationRecord,
                   load_csv, quantile_score, quantile_score_matrix, standardize,
                   validate_index_spec)
from .kernels import (KernelConfig, NumericalError, WeightSet, cross_matrix,
                      gaussian_entry, gram_matrix, jittered_cholesky,
                      polynomial_entry)
from .likelihood import (Hyperparameters, MarginalCache, draw_sigma_gamma,
                         integrated_log_posterior, marginal_log_likelihood)
from .sampler import (ParamState, PosteriorChain, SamplerSettings,
                      canonicalize_sign, export_chain_csv, initial_state,
                      load_chain, merge_chains, run_chain, run_chains, save_chain,
                      update_lambda, update_theta_delta)
from .simulation import (FitMetrics, KernelMethod, QgcMethod, ScenarioTruth,
                         block_correlated_exposures, evaluate_fit,
                         generate_scenario, kfold_cv, run_simulation_study,
                         simulated_covariates, summarize_study, train_test_split)

__all__ = [name for name in dir() if not name.startswith("_")]
