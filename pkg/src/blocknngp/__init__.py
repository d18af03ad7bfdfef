"""Block nearest-neighbor Gaussian process regression.

Large spatial Gaussian process models made tractable by partitioning the
domain into blocks that are conditionally independent given a few
past-neighbor blocks, which gives the field a sparse precision matrix
assembled from small per-block factors.
"""
from .blockgraph import BlockGraph, build_graph, location_conditioning_set
from .covariance import CovarianceSpec, cov, cov_matrix, effective_range_to_phi
from .factors import (BlockFactors, FactorStructure, assemble_precision,
                      compute_block_factors, log_det_ctilde, quadratic_form)
from .geometry import (BlockPartition, LocationSet, distance, kdtree_partition,
                       regular_partition, singleton_partition)
from .inference import (McmcConfig, ModelSpec, PosteriorSamples, PriorSpec,
                        metrics, posterior_summary, recover_field_draws,
                        run_collapsed_mcmc, run_full_mcmc)
from .predict import PredictionResult, neighbor_set_for_site, predict_w, predict_y
from .process import (GaussianFieldSample, empirical_correlation_curve,
                      implied_cross_covariance, kld_vs_full_gp, log_density,
                      simulate_block_nngp, simulate_full_gp)
from .sparse import (BandedCholesky, NotPositiveDefiniteError, SparsePrecision,
                     sparse_cholesky)

__version__ = "0.1.0"
