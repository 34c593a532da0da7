"""Monte Carlo estimators and their reliability measures.

All functions take an M×N matrix of scalar draws (chain × iteration),
sampling phase only. Conventions:

    B̂ = sample variance of the chain means (denominator M−1)
    Ŵ = mean of the per-chain sample variances (denominator N−1)
    R̂ = sqrt((N−1)/N + B̂/Ŵ)

Degenerate inputs (all chains constant) give NaN rather than raising.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from src.errors import InvalidArgumentError


def _as_matrix(samples, min_chains: int = 1, min_draws: int = 1) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.size == 0:
        raise InvalidArgumentError(f"expected a non-empty M×N matrix, got shape {x.shape}")
    m, n = x.shape
    if m < min_chains:
        raise InvalidArgumentError(f"need at least {min_chains} chains, got {m}")
    if n < min_draws:
        raise InvalidArgumentError(f"need at least {min_draws} draws per chain, got {n}")
    return x


def chain_means(samples) -> tuple[np.ndarray, float]:
    """Per-chain means and their average."""
    x = _as_matrix(samples)
    per_chain = x.mean(axis=1)
    return per_chain, float(per_chain.mean())


class RhatComponents(NamedTuple):
    bhat: float
    what: float
    rhat: float


def rhat_components(samples) -> RhatComponents:
    x = _as_matrix(samples, min_chains=2, min_draws=2)
    n = x.shape[1]
    bhat = float(np.var(x.mean(axis=1), ddof=1))
    what = float(np.mean(np.var(x, axis=1, ddof=1)))
    if not what > 0:
        return RhatComponents(bhat, what, math.nan)
    return RhatComponents(bhat, what, math.sqrt((n - 1) / n + bhat / what))


def bhat_tolerance(what: float, n: int, epsilon: float) -> float:
    """Largest B̂ with R̂ ≤ 1+ε: ((1+ε)² − (N−1)/N)·Ŵ."""
    return ((1.0 + epsilon) ** 2 - (n - 1) / n) * what


def split_chains(samples) -> np.ndarray:
    """Halve every chain (odd N drops the middle draw): 2M chains of ⌊N/2⌋."""
    x = _as_matrix(samples)
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, -half:]], axis=0)


def split_rhat(samples) -> float:
    x = _as_matrix(samples, min_draws=4)
    return rhat_components(split_chains(x)).rhat


def nested_rhat(samples, group_of_chain) -> float:
    """R̂ over superchains (groups of chains sharing an initial point).

    nB̂ = variance of the superchain means (denominator K−1)
    nŴ = mean over groups of [variance of chain means in the group
         + mean within-chain variance in the group]
    A single draw per chain contributes zero within-chain variance.
    """
    x = _as_matrix(samples)
    groups = np.asarray(group_of_chain)
    if groups.shape != (x.shape[0],):
        raise InvalidArgumentError("group_of_chain must label every chain")
    labels = np.unique(groups)
    if labels.size < 2:
        raise InvalidArgumentError(f"nested R-hat needs at least 2 groups, got {labels.size}")

    means = x.mean(axis=1)
    within = np.var(x, axis=1, ddof=1) if x.shape[1] > 1 else np.zeros(x.shape[0])
    super_means, super_within = [], []
    for k in labels:
        members = groups == k
        if members.sum() < 2:
            raise InvalidArgumentError(f"group {k} has fewer than 2 chains")
        super_means.append(means[members].mean())
        super_within.append(np.var(means[members], ddof=1) + within[members].mean())
    nbhat = float(np.var(super_means, ddof=1))
    nwhat = float(np.mean(super_within))
    if not nwhat > 0:
        return math.nan
    return math.sqrt(1.0 + nbhat / nwhat)


def autocovariance(chain, max_lag: int) -> np.ndarray:
    """ĉ_t = (1/N) Σ (x_n − x̄)(x_{n+t} − x̄) for t = 0..max_lag, via FFT."""
    x = np.asarray(chain, dtype=float)
    n = x.size
    if x.ndim != 1 or n < 2:
        raise InvalidArgumentError("autocovariance needs a 1-D chain of at least 2 draws")
    if not 0 <= max_lag < n:
        raise InvalidArgumentError(f"max_lag must lie in [0, {n - 1}], got {max_lag}")
    centred = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    spectrum = np.fft.rfft(centred, size)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), size)[: max_lag + 1]
    return acov / n


def ess_between_chains(samples) -> float:
    """Independent-chains ESS: Var_p f / Var(f̄) with Var(f̄) ≈ B̂/M.

    Used when chains are too short for autocorrelation estimates; for a
    single draw per chain it is exactly M.
    """
    x = _as_matrix(samples, min_chains=2)
    m, n = x.shape
    if n == 1:
        return float(m) if np.ptp(x) > 0 else math.nan
    bhat = float(np.var(x.mean(axis=1), ddof=1))
    if not bhat > 0:
        return math.nan
    value = m * float(np.var(x, ddof=1)) / bhat
    return float(min(max(value, 1.0), m * n))


def ess(samples) -> float:
    """Multi-chain autocorrelation ESS.

    ρ̂_t = 1 − (Ŵ − mean_m ĉ_t^(m)) / vâr⁺ with vâr⁺ = ((N−1)/N)·Ŵ + B̂ and
    ĉ_t^(m) the biased within-chain autocovariance; ρ̂_0 = 1. Summation stops
    at the first negative sum of an adjacent pair (ρ̂_{2k} + ρ̂_{2k+1}),
    without monotonisation. ESS = MN/τ̂ with τ̂ = 1 + 2Σ_{t≥1}ρ̂_t, clamped to
    [1, MN·log10(MN)]. Chains shorter than 4 draws use ess_between_chains.
    """
    x = _as_matrix(samples)
    m, n = x.shape
    if n < 4:
        if m < 2:
            raise InvalidArgumentError("ESS needs N >= 4, or at least 2 chains")
        return ess_between_chains(x)

    acov = np.stack([autocovariance(row, n - 1) for row in x])
    what = float(acov[:, 0].mean()) * n / (n - 1)
    bhat = float(np.var(x.mean(axis=1), ddof=1)) if m > 1 else 0.0
    var_plus = what * (n - 1) / n + bhat
    if not var_plus > 0:
        return math.nan

    rho = 1.0 - (what - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    pair_total = 0.0
    t = 0
    while t + 1 < n - 2:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair_total += pair
        t += 2
    tau = 2.0 * pair_total - 1.0
    total = m * n
    upper = total * math.log10(total)
    if not tau > 0:
        return upper
    return float(min(max(total / tau, 1.0), upper))


def ess_from_variance_ratio(samples) -> float:
    """M·Ŵ/B̂: the between/within ratio ESS for stationary chains (less stable)."""
    x = _as_matrix(samples, min_chains=2, min_draws=2)
    bhat, what, _ = rhat_components(x)
    if not bhat > 0:
        return math.nan
    return x.shape[0] * what / bhat


def mcse(sd: float, ess: float) -> float:
    """Monte Carlo standard error sd/√ESS."""
    if not ess > 0:
        raise InvalidArgumentError(f"ESS must be positive, got {ess}")
    if sd < 0:
        raise InvalidArgumentError(f"sd must be non-negative, got {sd}")
    return sd / math.sqrt(ess)


def quantile(samples, q: float) -> float:
    """Linear interpolation at rank (n−1)·q between order statistics."""
    if not 0.0 <= q <= 1.0:
        raise InvalidArgumentError(f"quantile level must lie in [0, 1], got {q}")
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise InvalidArgumentError("quantile of an empty sample")
    return float(np.quantile(x, q, method="linear"))
