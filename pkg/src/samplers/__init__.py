from src.samplers.adaptation import adapt_update, freeze, init_tuning, warmup_schedule
from src.samplers.kernels import KERNELS, ChainState, hmc_step, init_chain_state, leapfrog, mala_step, rwm_step

__all__ = [
    "KERNELS",
    "ChainState",
    "adapt_update",
    "freeze",
    "hmc_step",
    "init_chain_state",
    "init_tuning",
    "leapfrog",
    "mala_step",
    "rwm_step",
    "warmup_schedule",
]
