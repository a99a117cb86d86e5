"""Bayesian network regression with spike-and-slab node selection.

Fits a scalar response against symmetric network predictors by Gibbs
sampling, reports influential nodes and edges, and ships generators for the
synthetic benchmarks the model was studied on.
"""

from .data import (
    ChainState,
    Hyperparameters,
    NetworkDataset,
    PosteriorDraws,
    frobenius_inner,
    gamma_to_B,
    pair_from_index,
    pair_index,
    upper_triangle_vectorize,
)
from .diagnostics import ConvergenceReport, assess_convergence, split_rhat
from .gibbs import (
    ChainResult,
    Checkpoint,
    SweepConfig,
    gibbs_step,
    init_state,
    resume_chain,
    run_chain,
    run_chains,
)
from .samplers import NumericalSingularityError, rng_stream, sample_gig
from .simulate import SimConfig, SimTruth, augment_dataset, build_sample_networks, generate
from .summaries import SummaryReport, build_summary, classification_rates, mse_metrics

__version__ = "0.1.0"

__all__ = [
    "ChainResult",
    "ChainState",
    "Checkpoint",
    "ConvergenceReport",
    "Hyperparameters",
    "NetworkDataset",
    "NumericalSingularityError",
    "PosteriorDraws",
    "SimConfig",
    "SimTruth",
    "SummaryReport",
    "SweepConfig",
    "assess_convergence",
    "augment_dataset",
    "build_sample_networks",
    "build_summary",
    "classification_rates",
    "frobenius_inner",
    "gamma_to_B",
    "generate",
    "gibbs_step",
    "init_state",
    "mse_metrics",
    "pair_from_index",
    "pair_index",
    "resume_chain",
    "rng_stream",
    "run_chain",
    "run_chains",
    "sample_gig",
    "split_rhat",
    "upper_triangle_vectorize",
    "__version__",
]
