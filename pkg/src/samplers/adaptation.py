"""Warmup adaptation: dual-averaging step size, windowed diagonal preconditioner,
and HMC trajectory-length selection by expected squared jump distance per
gradient evaluation.

Warmup is split into windows of doubling length (25, 25, 50, 100, ...)
followed by a 50-iteration step-size-only window. The step size is updated
after every warmup iteration; the preconditioner only at the end of a
metric window, after which dual averaging restarts centred on the averaged
step reached so far. Only the very first run shrinks towards 10 times the
initial step.
Tuning freezes at the end of warmup and never changes afterwards.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import NamedTuple, Sequence

import numpy as np

from src.errors import ContractViolationError, InvalidArgumentError
from src.model.targets import TargetModel
from src.samplers.kernels import TARGET_ACCEPT, ChainState, acceptance_probability, kinetic_energy, leapfrog
from src.schemas import DualAveragingState, TuningState

# Dual averaging constants
GAMMA = 0.05
T0 = 10.0
KAPPA = 0.75

PRECONDITIONER_FLOOR = 1e-10
LEAPFROG_GRID = (1, 2, 4, 8, 16, 32)

INITIAL_WINDOW = 25
TERMINAL_WINDOW = 50
MIN_METRIC_WARMUP = 2 * INITIAL_WINDOW + TERMINAL_WINDOW


class AdaptationWindow(NamedTuple):
    start: int
    end: int               # exclusive
    update_metric: bool


def warmup_schedule(num_warmup: int) -> list[AdaptationWindow]:
    """Window layout of a warmup phase of the given length."""
    if num_warmup <= 0:
        return []
    if num_warmup < MIN_METRIC_WARMUP:
        return [AdaptationWindow(0, num_warmup, False)]

    slow_end = num_warmup - TERMINAL_WINDOW
    windows: list[AdaptationWindow] = []
    start, length, next_length = 0, INITIAL_WINDOW, INITIAL_WINDOW
    while start < slow_end:
        # absorb a remainder too short for the following window
        if slow_end - (start + length) < next_length:
            length = slow_end - start
        windows.append(AdaptationWindow(start, start + length, True))
        start += length
        length, next_length = next_length, 2 * next_length
    windows.append(AdaptationWindow(slow_end, num_warmup, False))
    return windows


def default_step_size(sampler: str, dimension: int) -> float:
    if sampler == "rwm":
        return 2.38 / math.sqrt(dimension)
    if sampler == "mala":
        return 1.65 * dimension ** (-1.0 / 6.0)
    return dimension ** (-0.25)


def restart_dual_averaging(step_size: float, shrink_factor: float = 1.0) -> DualAveragingState:
    log_step = math.log(step_size)
    return DualAveragingState(
        mu=math.log(shrink_factor * step_size), log_step=log_step, log_step_bar=log_step
    )


def init_tuning(
    sampler: str,
    dimension: int,
    num_leapfrog_steps: int = 1,
    step_size: float | None = None,
    jitter_steps: bool = False,
) -> TuningState:
    step = step_size or default_step_size(sampler, dimension)
    return TuningState(
        step_size=step,
        diag_preconditioner=[1.0] * dimension,
        num_leapfrog_steps=num_leapfrog_steps if sampler == "hmc" else 1,
        jitter_steps=jitter_steps and sampler == "hmc",
        target_accept=TARGET_ACCEPT[sampler],
        dual_avg=restart_dual_averaging(step, shrink_factor=10.0),
    )


def dual_averaging_update(state: DualAveragingState, accept_prob: float, target: float) -> DualAveragingState:
    t = state.iteration + 1
    eta = 1.0 / (t + T0)
    h_bar = (1.0 - eta) * state.h_bar + eta * (target - accept_prob)
    log_step = state.mu - math.sqrt(t) / GAMMA * h_bar
    weight = t ** (-KAPPA)
    log_step_bar = weight * log_step + (1.0 - weight) * state.log_step_bar
    return DualAveragingState(
        mu=state.mu, log_step=log_step, log_step_bar=log_step_bar, h_bar=h_bar, iteration=t
    )


def window_variance(draws: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Marginal sample variance (denominator n−1), floored; returns clamped dims."""
    draws = np.asarray(draws, dtype=float)
    variance = np.var(draws, axis=0, ddof=1)
    clamped = [int(i) for i in np.flatnonzero(~(variance > PRECONDITIONER_FLOOR))]
    return np.maximum(np.nan_to_num(variance, nan=PRECONDITIONER_FLOOR), PRECONDITIONER_FLOOR), clamped


def _updated(tuning: TuningState, accept_prob: float, draws: np.ndarray | None) -> TuningState:
    dual_avg = dual_averaging_update(tuning.dual_avg, accept_prob, tuning.target_accept)
    step_size = math.exp(dual_avg.log_step)
    update = {"step_size": step_size, "dual_avg": dual_avg}
    if draws is not None and len(draws) >= 2:
        variance, clamped = window_variance(draws)
        update["diag_preconditioner"] = variance.tolist()
        centre = math.exp(dual_avg.log_step_bar)
        update["step_size"] = centre
        update["dual_avg"] = restart_dual_averaging(centre)
        if clamped and "preconditioner-clamped" not in tuning.flags:
            update["flags"] = [*tuning.flags, "preconditioner-clamped"]
    return tuning.model_copy(update=update)


def adapt_update(
    tunings: Sequence[TuningState],
    recent_draws: Sequence[np.ndarray] | None,
    accept_stats: Sequence[float],
    mode: str = "per_chain",
) -> list[TuningState]:
    """One adaptation step for every chain.

    `accept_stats` are per-chain acceptance statistics since the previous
    call; `recent_draws` (per-chain arrays of shape (n, d)) is given only at
    the end of a metric window. In cross_chain mode the statistics and the
    windows are pooled and every chain receives the same TuningState.
    """
    if any(t.frozen for t in tunings):
        raise ContractViolationError("adapt_update called on frozen tuning")
    if len(accept_stats) != len(tunings):
        raise InvalidArgumentError("one acceptance statistic per chain is required")
    if recent_draws is not None and len(recent_draws) != len(tunings):
        raise InvalidArgumentError("one draw window per chain is required")

    if mode == "per_chain":
        return [
            _updated(t, float(a), None if recent_draws is None else recent_draws[i])
            for i, (t, a) in enumerate(zip(tunings, accept_stats))
        ]
    if mode == "cross_chain":
        pooled = None if recent_draws is None else np.concatenate(recent_draws, axis=0)
        shared = _updated(tunings[0], float(np.mean(accept_stats)), pooled)
        return [shared] * len(tunings)
    raise InvalidArgumentError(f"unknown adaptation mode {mode!r}")


def freeze(tuning: TuningState) -> TuningState:
    """Final warmup step size is the dual-averaged one; nothing changes afterwards."""
    if tuning.frozen:
        return tuning
    step_size = tuning.step_size
    if tuning.dual_avg.iteration > 0:
        step_size = math.exp(tuning.dual_avg.log_step_bar)
    return tuning.model_copy(update={"step_size": step_size, "frozen": True})


# ── Trajectory length (HMC) ───────────────────────────────────────────────────

def probe_jumps(
    model: TargetModel,
    state: ChainState,
    tuning: TuningState,
    grid: Sequence[int] = LEAPFROG_GRID,
) -> tuple[np.ndarray, ChainState]:
    """Expected squared jump (acceptance-weighted, preconditioned norm) per grid entry.

    Probe trajectories start at the chain's current point and consume its
    own random stream; the chain does not move.
    """
    precond = np.asarray(tuning.diag_preconditioner, dtype=float)
    jumps = np.zeros(len(grid))
    evaluations = 0
    for j, steps in enumerate(grid):
        p0 = state.rng_stream.standard_normal(precond.size) / np.sqrt(precond)
        traj = leapfrog(
            model, state.position, p0, tuning.step_size, steps, precond,
            gradient=state.last_gradient, log_density=state.last_log_density,
        )
        evaluations += traj.gradient_evaluations
        if traj.divergent:
            continue
        delta_h = (-traj.log_density + kinetic_energy(traj.momentum, precond)) - (
            -state.last_log_density + kinetic_energy(p0, precond)
        )
        if not math.isfinite(delta_h):
            continue
        jump = traj.position - state.position
        jumps[j] = acceptance_probability(delta_h) * float(np.sum(jump * jump / precond))
    return jumps, replace(state, gradient_evaluations=state.gradient_evaluations + evaluations)


def select_num_leapfrog_steps(jumps_per_chain: Sequence[np.ndarray], grid: Sequence[int] = LEAPFROG_GRID) -> int:
    """Grid entry maximising pooled squared jump per gradient evaluation."""
    pooled = np.mean(np.asarray(jumps_per_chain), axis=0) / np.asarray(grid, dtype=float)
    return int(grid[int(np.argmax(pooled))])
