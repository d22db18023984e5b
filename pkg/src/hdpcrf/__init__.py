"""Hierarchical Dirichlet process mixtures with conjugate exponential-family
dishes, fitted by a collapsed Chinese-restaurant-franchise Gibbs sampler."""

from hdpcrf.conjugate import (
    CountStats,
    GammaPoissonParams,
    NormalGammaParams,
    VectorStats,
    gp_log_marginal,
    gp_log_pred_block,
    gp_log_pred_one,
    gp_posterior,
    ng_log_marginal,
    ng_log_pred_block,
    ng_log_pred_one,
    ng_posterior,
    stats_add,
    stats_remove,
)
from hdpcrf.model import (
    ChainTrace,
    GroupedDataset,
    HdpHyper,
    SeatingState,
    check_consistency,
    crf_log_prior,
    init_seating,
    log_joint,
)
from hdpcrf.sampler import SamplerConfig, gibbs_sweep, run_chain

__all__ = [
    "ChainTrace", "CountStats", "GammaPoissonParams", "GroupedDataset", "HdpHyper",
    "NormalGammaParams", "SamplerConfig", "SeatingState", "VectorStats",
    "check_consistency", "crf_log_prior", "gibbs_sweep", "gp_log_marginal",
    "gp_log_pred_block", "gp_log_pred_one", "gp_posterior", "init_seating",
    "log_joint", "ng_log_marginal", "ng_log_pred_block", "ng_log_pred_one",
    "ng_posterior", "run_chain", "stats_add", "stats_remove",
]
