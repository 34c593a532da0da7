"""Per-quantity diagnostics over the sampling phase of a run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from src.config import Config
from src.diagnostics import estimators as est
from src.errors import InvalidArgumentError
from src.schemas import ChainMeta, DiagnosticsReport, QuantitySummary

WARMUP = "warmup"
SAMPLING = "sampling"


@dataclass(frozen=True)
class ChainMatrix:
    """All draws of a run, shape (M, warmup + sampling, d).

    The first `num_warmup` iterations of every chain are warmup draws; they
    are kept for inspection and excluded from every statistic.
    """

    draws: np.ndarray
    num_warmup: int
    group_of_chain: np.ndarray
    chain_meta: list[ChainMeta] = field(default_factory=list)

    def __post_init__(self):
        draws = np.asarray(self.draws, dtype=float)
        if draws.ndim != 3:
            raise InvalidArgumentError(f"draws must have shape (M, N, d), got {draws.shape}")
        if not 0 <= self.num_warmup <= draws.shape[1]:
            raise InvalidArgumentError("num_warmup exceeds the number of iterations")
        groups = np.asarray(self.group_of_chain, dtype=int)
        if groups.shape != (draws.shape[0],):
            raise InvalidArgumentError("group_of_chain must label every chain")
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "group_of_chain", groups)

    @property
    def num_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def num_iterations(self) -> int:
        return self.draws.shape[1]

    @property
    def num_draws(self) -> int:
        """Sampling draws per chain."""
        return self.num_iterations - self.num_warmup

    @property
    def dimension(self) -> int:
        return self.draws.shape[2]

    @property
    def num_groups(self) -> int:
        return int(np.unique(self.group_of_chain).size)

    @property
    def phases(self) -> list[str]:
        return [WARMUP] * self.num_warmup + [SAMPLING] * self.num_draws

    @property
    def sampling_draws(self) -> np.ndarray:
        return self.draws[:, self.num_warmup:, :]

    @property
    def warmup_draws(self) -> np.ndarray:
        return self.draws[:, : self.num_warmup, :]

    @property
    def total_divergences(self) -> int:
        return sum(meta.divergences for meta in self.chain_meta)


@dataclass(frozen=True)
class QuantityOfInterest:
    """A scalar function of θ. Vectorized extractors map (..., d) to (...)."""

    name: str
    extractor: Callable[[np.ndarray], object]
    vectorized: bool = False

    def apply(self, draws: np.ndarray) -> np.ndarray:
        """Evaluate on an (M, N, d) block, returning an M×N matrix."""
        if self.vectorized:
            values = np.asarray(self.extractor(draws), dtype=float)
        else:
            values = np.apply_along_axis(lambda theta: float(self.extractor(theta)), -1, draws)
        if values.shape != draws.shape[:-1]:
            raise InvalidArgumentError(f"quantity {self.name!r} returned shape {values.shape}")
        return values


def coordinate(i: int) -> QuantityOfInterest:
    return QuantityOfInterest(f"theta[{i}]", lambda x: x[..., i], vectorized=True)


def squared(i: int) -> QuantityOfInterest:
    return QuantityOfInterest(f"theta[{i}]^2", lambda x: x[..., i] ** 2, vectorized=True)


def default_quantities(dimension: int, include_squares: bool = False) -> list[QuantityOfInterest]:
    quantities = [coordinate(i) for i in range(dimension)]
    if include_squares:
        quantities += [squared(i) for i in range(dimension)]
    return quantities


# ── Summaries ─────────────────────────────────────────────────────────────────

def _nested_applicable(groups: np.ndarray) -> bool:
    labels, counts = np.unique(groups, return_counts=True)
    return labels.size >= 2 and bool(np.all(counts >= 2))


def summarize_values(
    values: np.ndarray,
    name: str,
    group_of_chain: np.ndarray | None = None,
    *,
    rhat_threshold: float = 0.01,
    low_ess_threshold: float = 100.0,
    quantile_levels: Sequence[float] = (0.05, 0.5, 0.95),
) -> QuantitySummary:
    """All statistics for one M×N matrix of a scalar quantity."""
    x = np.asarray(values, dtype=float)
    m, n = x.shape
    if n < 1:
        raise InvalidArgumentError("the sampling phase is empty")
    if len(quantile_levels) != 3:
        raise InvalidArgumentError(f"three quantile levels are reported, got {len(quantile_levels)}")
    flags: list[str] = []

    per_chain, pooled = est.chain_means(x)
    pooled_draws = x.ravel()
    sd = float(np.std(pooled_draws, ddof=1)) if pooled_draws.size > 1 else math.nan
    q05, q50, q95 = (est.quantile(pooled_draws, q) for q in quantile_levels)

    if np.ptp(pooled_draws) == 0 or (n >= 2 and not np.any(np.ptp(x, axis=1) > 0)):
        flags.append("constant-chain")

    bhat = float(np.var(per_chain, ddof=1)) if m >= 2 else math.nan
    what = float(np.mean(np.var(x, axis=1, ddof=1))) if n >= 2 else math.nan
    rhat = est.rhat_components(x).rhat if m >= 2 and n >= 2 else math.nan
    if math.isnan(rhat):
        flags.append("rhat-undefined")
    elif rhat > 1.0 + rhat_threshold:
        flags.append("rhat-above-threshold")

    split = est.split_rhat(x) if n >= 4 else math.nan
    if math.isnan(split):
        flags.append("split-rhat-undefined")

    nested = None
    if group_of_chain is not None and _nested_applicable(np.asarray(group_of_chain)):
        nested = est.nested_rhat(x, group_of_chain)

    ess = est.ess(x) if (n >= 4 or m >= 2) else math.nan
    if math.isnan(ess):
        flags.append("ess-undefined")
        mcse = math.nan
    else:
        if ess < low_ess_threshold:
            flags.append("low-ess")
        mcse = est.mcse(sd, ess) if not math.isnan(sd) else math.nan

    return QuantitySummary(
        quantity=name,
        mean=pooled,
        chain_means=per_chain.tolist(),
        sd=sd,
        q05=q05,
        q50=q50,
        q95=q95,
        bhat=bhat,
        what=what,
        rhat=rhat,
        split_rhat=split,
        nested_rhat=nested,
        ess=ess,
        mcse=mcse,
        flags=flags,
    )


def summarize(
    matrix: ChainMatrix,
    quantities: Sequence[QuantityOfInterest] | None = None,
    *,
    rhat_threshold: float | None = None,
    config: Config | None = None,
) -> DiagnosticsReport:
    """Diagnostics per quantity on the sampling draws only."""
    config = config or Config()
    if matrix.num_draws < 1:
        raise InvalidArgumentError("the sampling phase is empty")
    quantities = quantities or default_quantities(matrix.dimension)
    epsilon = config.rhat_threshold if rhat_threshold is None else rhat_threshold
    draws = matrix.sampling_draws

    rows = []
    for quantity in quantities:
        row = summarize_values(
            quantity.apply(draws),
            quantity.name,
            matrix.group_of_chain,
            rhat_threshold=epsilon,
            low_ess_threshold=config.low_ess_threshold,
            quantile_levels=config.quantile_levels,
        )
        if matrix.total_divergences > 0:
            row.flags.append("divergences")
        rows.append(row)

    return DiagnosticsReport(
        quantities=rows,
        num_chains=matrix.num_chains,
        num_draws=matrix.num_draws,
        num_groups=matrix.num_groups,
        rhat_threshold=epsilon,
    )
