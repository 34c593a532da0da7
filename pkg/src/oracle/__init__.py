"""Analytic ground truth: OU marginals, TV distance and replicate decompositions."""

from src.oracle.ou import (
    indicator_bias,
    ou_exact_step,
    ou_marginal,
    relaxation_time,
    simulate_ou,
    tv_normal,
)
from src.oracle.studies import (
    error_decomposition,
    ou_decay_table,
    simulate_ou_decay,
    two_state_analytics,
    two_state_table,
    variance_decomposition,
)

__all__ = [
    "error_decomposition",
    "indicator_bias",
    "ou_decay_table",
    "ou_exact_step",
    "ou_marginal",
    "relaxation_time",
    "simulate_ou",
    "simulate_ou_decay",
    "tv_normal",
    "two_state_analytics",
    "two_state_table",
    "variance_decomposition",
]
