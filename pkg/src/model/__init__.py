"""Target distributions: log-density, gradient and analytic moments."""

from src.model.target_spec import parse_target
from src.model.targets import (
    TargetModel,
    evaluate,
    make_banana,
    make_gaussian,
    make_ill_conditioned,
)

__all__ = [
    "TargetModel",
    "evaluate",
    "make_banana",
    "make_gaussian",
    "make_ill_conditioned",
    "parse_target",
]
