"""Convergence and precision diagnostics over multi-chain draws."""

from src.diagnostics.estimators import (
    autocovariance,
    bhat_tolerance,
    chain_means,
    ess,
    ess_between_chains,
    ess_from_variance_ratio,
    mcse,
    nested_rhat,
    quantile,
    rhat_components,
    split_rhat,
)
from src.diagnostics.summary import ChainMatrix, QuantityOfInterest, default_quantities, summarize

__all__ = [
    "ChainMatrix",
    "QuantityOfInterest",
    "autocovariance",
    "bhat_tolerance",
    "chain_means",
    "default_quantities",
    "ess",
    "ess_between_chains",
    "ess_from_variance_ratio",
    "mcse",
    "nested_rhat",
    "quantile",
    "rhat_components",
    "split_rhat",
    "summarize",
]
