"""Replicate-study decompositions and the oracle tables.

`ou_decay_table` is analytic; `simulate_ou_decay` measures the same
columns from grouped replicates of the single-draw estimator θ(t), where
each group shares one point-mass start drawn from normal(μ₀, σ₀).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

from src.diagnostics.estimators import ess
from src.engine.rng import derive_chain_rng
from src.errors import InvalidArgumentError
from src.oracle.ou import ou_exact_step, ou_marginal, sample_initial, tv_to_stationary
from src.schemas import OUProcessSpec, ReplicateStudy

OU_DECAY_COLUMNS = ["t", "bias", "squared_bias", "nonstationary_var", "persistent_var", "tv"]
TWO_STATE_COLUMNS = ["q", "ess_per_draw_analytic", "ess_per_draw_measured", "tv_decay_factor"]


class ErrorDecomposition(NamedTuple):
    mse: float
    squared_bias: float
    variance: float


class VarianceDecomposition(NamedTuple):
    nonstationary: float
    persistent: float
    total: float


def error_decomposition(study: ReplicateStudy, truth: float) -> ErrorDecomposition:
    """mse = squared_bias + variance·(R−1)/R, with the sample variance (R−1 denominator)."""
    x = np.asarray(study.estimates, dtype=float)
    if x.size < 2:
        raise InvalidArgumentError("error decomposition needs at least 2 replicates")
    return ErrorDecomposition(
        mse=float(np.mean((x - truth) ** 2)),
        squared_bias=float((x.mean() - truth) ** 2),
        variance=float(np.var(x, ddof=1)),
    )


def variance_decomposition(study: ReplicateStudy) -> VarianceDecomposition:
    """Law-of-total-variance split over initialization groups."""
    if study.groups is None:
        raise InvalidArgumentError("variance decomposition needs grouped replicates")
    frame = pd.DataFrame({"group": study.groups, "estimate": study.estimates})
    by_group = frame.groupby("group")["estimate"]
    sizes = by_group.size()
    if len(sizes) < 2 or (sizes < 2).any():
        raise InvalidArgumentError("need at least 2 groups of at least 2 replicates")
    nonstationary = float(np.var(by_group.mean().to_numpy(), ddof=1))
    persistent = float(by_group.var(ddof=1).mean())
    return VarianceDecomposition(nonstationary, persistent, nonstationary + persistent)


# ── Two-state chain ───────────────────────────────────────────────────────────

def two_state_analytics(q: float) -> tuple[float, float]:
    """(ESS per draw, one-step TV contraction) of the symmetric switch-with-q chain."""
    if not 0 < q <= 1:
        raise InvalidArgumentError(f"switch probability must lie in (0, 1], got {q}")
    ess_per_draw = math.inf if q == 1 else q / (1.0 - q)
    return ess_per_draw, abs(1.0 - 2.0 * q)


def simulate_two_state(q: float, length: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary start, then switch state with probability q at every step."""
    if not 0 < q <= 1:
        raise InvalidArgumentError(f"switch probability must lie in (0, 1], got {q}")
    if length < 1:
        raise InvalidArgumentError(f"length must be positive, got {length}")
    start = int(rng.integers(2))
    switches = np.concatenate([[0], rng.random(length - 1) < q]).astype(np.int64)
    return ((start + np.cumsum(switches)) % 2).astype(float)


def measured_ess_per_draw(q: float, length: int, rng: np.random.Generator) -> float:
    chain = simulate_two_state(q, length, rng)
    return ess(chain[None, :]) / length


def two_state_table(
    q_grid: Sequence[float],
    length: int,
    root_seed: int = 0,
    threads: int = 1,
) -> pd.DataFrame:
    def row(item: tuple[int, float]) -> dict:
        index, q = item
        analytic, decay = two_state_analytics(q)
        measured = measured_ess_per_draw(q, length, derive_chain_rng(root_seed, index, "oracle"))
        return {
            "q": q,
            "ess_per_draw_analytic": analytic,
            "ess_per_draw_measured": measured,
            "tv_decay_factor": decay,
        }

    rows = _parallel_rows(row, list(enumerate(q_grid)), threads)
    return pd.DataFrame(rows, columns=TWO_STATE_COLUMNS)


# ── OU decay ──────────────────────────────────────────────────────────────────

def ou_decay_table(spec: OUProcessSpec, t_grid: Sequence[float]) -> pd.DataFrame:
    """Analytic bias and variance terms of the single-draw estimator θ(t)."""
    rows = []
    for t in t_grid:
        mean, _ = ou_marginal(spec, t)
        decay2 = math.exp(-2.0 * t)
        bias = mean - spec.mu
        rows.append({
            "t": float(t),
            "bias": bias,
            "squared_bias": bias * bias,
            "nonstationary_var": spec.sigma0**2 * decay2,
            "persistent_var": spec.sigma**2 * -math.expm1(-2.0 * t),
            "tv": tv_to_stationary(spec, t),
        })
    return pd.DataFrame(rows, columns=OU_DECAY_COLUMNS)


def grouped_single_draws(
    spec: OUProcessSpec,
    t: float,
    groups: int,
    replicates: int,
    rng: np.random.Generator,
) -> ReplicateStudy:
    """θ(t) for `replicates` runs from each of `groups` shared starts."""
    starts = sample_initial(spec, rng, groups)
    theta = np.repeat(starts[:, None], replicates, axis=1)
    if t > 0:
        theta = ou_exact_step(spec, theta, t, rng)
    return ReplicateStudy(
        estimates=theta.ravel().tolist(),
        groups=np.repeat(np.arange(groups), replicates).tolist(),
    )


def simulate_ou_decay(
    spec: OUProcessSpec,
    t_grid: Sequence[float],
    groups: int = 2000,
    replicates: int = 2000,
    root_seed: int = 0,
    threads: int = 1,
) -> pd.DataFrame:
    """Empirical counterpart of ou_decay_table."""
    if groups < 2 or replicates < 2:
        raise InvalidArgumentError("need at least 2 groups of at least 2 replicates")

    def row(item: tuple[int, float]) -> dict:
        index, t = item
        study = grouped_single_draws(spec, t, groups, replicates, derive_chain_rng(root_seed, index, "oracle"))
        errors = error_decomposition(study, spec.mu)
        split = variance_decomposition(study)
        return {
            "t": float(t),
            "bias": float(np.mean(study.estimates)) - spec.mu,
            "squared_bias": errors.squared_bias,
            "nonstationary_var": split.nonstationary,
            "persistent_var": split.persistent,
            "tv": tv_to_stationary(spec, t),
        }

    rows = _parallel_rows(row, list(enumerate(t_grid)), threads)
    return pd.DataFrame(rows, columns=OU_DECAY_COLUMNS)


def decay_slope(t, values) -> float:
    """Least-squares slope of log(values) against t."""
    return float(np.polyfit(np.asarray(t, dtype=float), np.log(np.asarray(values, dtype=float)), 1)[0])


def _parallel_rows(fn, items: list, threads: int) -> list[dict]:
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(fn, items))
