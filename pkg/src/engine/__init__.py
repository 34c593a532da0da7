"""Chain orchestration: seeding, initialization, phases and persistence."""

from src.engine.initialization import ChainInit, initialize
from src.engine.rng import derive_chain_rng
from src.engine.run_log import RunLogger
from src.engine.runner import ChainRunner, RunResult, run, run_adaptive, run_many_short

__all__ = [
    "ChainInit",
    "ChainRunner",
    "RunLogger",
    "RunResult",
    "derive_chain_rng",
    "initialize",
    "run",
    "run_adaptive",
    "run_many_short",
]
