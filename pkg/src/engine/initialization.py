"""Initial points for K groups of M/K chains.

Chains m = g·(M/K) … (g+1)·(M/K) − 1 form group g and share θ⁽⁰⁾ bit for
bit. Without an explicit K every chain is its own group and starts from its
own point. Each group's point is drawn from the group's own init stream, and
each chain gets its own warmup stream.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from src.engine.rng import derive_chain_rng
from src.errors import InvalidArgumentError
from src.model.targets import TargetModel
from src.schemas import RunConfig

DEFAULT_SCALE = 10.0
SCALE_PER_SD = 4.0


class ChainInit(NamedTuple):
    chain: int
    group: int
    position: np.ndarray
    rng: np.random.Generator


def overdispersed_scale(model: TargetModel, scale: float | None = None) -> float:
    if scale is not None:
        return float(scale)
    if model.analytic_marginal_sd is not None:
        return SCALE_PER_SD * float(np.max(model.analytic_marginal_sd))
    return DEFAULT_SCALE


def group_points(config: RunConfig, model: TargetModel) -> list[np.ndarray]:
    """One θ⁽⁰⁾ per group."""
    d = model.dimension
    k_groups = config.num_groups
    strategy = config.init_strategy

    if strategy == "fixed_points":
        points = config.init_points or []
        if len(points) != k_groups:
            raise InvalidArgumentError(
                f"fixed_points needs one point per group ({k_groups}), got {len(points)}"
            )
        out = [np.asarray(p, dtype=float) for p in points]
        for p in out:
            if p.shape != (d,):
                raise InvalidArgumentError(f"fixed point {p.tolist()} does not have dimension {d}")
        return out

    if strategy == "exact" and not model.has_exact_sampler:
        raise InvalidArgumentError(f"{model.name} has no exact sampler for init_strategy='exact'")

    scale = overdispersed_scale(model, config.init_scale)
    points = []
    for k in range(k_groups):
        rng = derive_chain_rng(config.root_seed, k, "init")
        if strategy == "overdispersed":
            points.append(scale * rng.standard_normal(d))
        elif strategy == "standard_normal":
            points.append(rng.standard_normal(d))
        else:
            points.append(np.asarray(model.sample_exact(rng, 1)[0], dtype=float))
    return points


def initialize(config: RunConfig, model: TargetModel) -> list[ChainInit]:
    points = group_points(config, model)
    per_group = config.chains_per_group
    return [
        ChainInit(
            chain=m,
            group=m // per_group,
            position=points[m // per_group].copy(),
            rng=derive_chain_rng(config.root_seed, m, "warmup"),
        )
        for m in range(config.chains)
    ]
