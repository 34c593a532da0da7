"""Chain-count sweep: gradient cost per chain to reach a standardized bias.

For every chain count M and replicate seed, one cross-chain warmup runs
with every chain started from its own point. At the end of each adaptation
window (the terminal step-size window included) the window's draws are
pooled over chains into a mean estimate. Each replicate stops at the first
window whose standardized bias max_i |estimate_i − mean_i| / sd_i is within
the threshold, or at the last window if none is. Per M the row reports the
median over replicates of the per-chain gradient cost and of the bias at
that window, and the share of replicates that reached the threshold.

Chain k draws its initial point from stream k of the replicate seed, so
the first M chains start at the same points for every M in the sweep.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import NamedTuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.config import Config
from src.engine.run_log import RunLogger
from src.engine.runner import ChainRunner
from src.errors import InvalidArgumentError
from src.experiments.commands import CommandOutput, prepare_output_dir, write_table
from src.model.target_spec import parse_target
from src.samplers.adaptation import warmup_schedule
from src.schemas import ExperimentSpec

SWEEP_COLUMNS = ["M", "grad_evals_per_chain", "achieved_bias", "achieved_fraction", "achieved"]


class WindowTrace(NamedTuple):
    end: int                       # warmup iteration after which the window closed
    estimate: np.ndarray           # pooled mean of the window's draws, per dimension
    grad_evals_per_chain: float


def standardized_bias(estimate, mean, sd) -> float:
    return float(np.max(np.abs(np.asarray(estimate) - mean) / sd))


class ReplicateHit(NamedTuple):
    trace: WindowTrace
    bias: float
    achieved: bool


def sweep_cell(spec: ExperimentSpec, chains: int, seed: int, settings: Config) -> list[WindowTrace]:
    """Run one cross-chain warmup and trace every adaptation window."""
    model = parse_target(spec.target)
    config = spec.run.model_copy(update={
        "chains": chains,
        "groups": None,
        "samples": 1,
        "root_seed": seed,
        "target_ess": None,
    })
    result = ChainRunner(config, model, threads=1, settings=settings).run()
    warmup = result.matrix.warmup_draws
    traces = []
    for window in warmup_schedule(config.warmup):
        traces.append(WindowTrace(
            end=window.end,
            estimate=warmup[:, window.start:window.end].mean(axis=(0, 1)),
            grad_evals_per_chain=float(result.warmup_gradient_trace[:, window.end - 1].mean()),
        ))
    return traces


def first_hit(cell: list[WindowTrace], mean, sd, threshold: float) -> ReplicateHit:
    """First window of one replicate within the bias threshold, else its last window."""
    hit = None
    for trace in cell:
        bias = standardized_bias(trace.estimate, mean, sd)
        hit = ReplicateHit(trace, bias, bias <= threshold)
        if hit.achieved:
            break
    return hit


def sweep_row(chains: int, cells: list[list[WindowTrace]], mean, sd, threshold: float) -> dict:
    hits = [first_hit(cell, mean, sd, threshold) for cell in cells]
    fraction = float(np.mean([h.achieved for h in hits]))
    return {
        "M": chains,
        "grad_evals_per_chain": float(np.median([h.trace.grad_evals_per_chain for h in hits])),
        "achieved_bias": float(np.median([h.bias for h in hits])),
        "achieved_fraction": fraction,
        "achieved": fraction >= 0.5,
    }


def cmd_sweep_chains(
    spec: ExperimentSpec,
    logger: RunLogger | None = None,
    settings: Config | None = None,
) -> CommandOutput:
    settings = settings or Config()
    if spec.run.adaptation != "cross_chain":
        raise InvalidArgumentError("sweep-chains requires cross-chain adaptation")
    target_model = parse_target(spec.target)
    if not target_model.has_analytic_moments:
        raise InvalidArgumentError(f"{target_model.name} has no analytic mean and marginal sds")
    if not any(w.update_metric for w in warmup_schedule(spec.run.warmup)):
        raise InvalidArgumentError(f"warmup of {spec.run.warmup} iterations has no adaptation windows")
    out_dir = prepare_output_dir(spec.output_dir)

    seeds = spec.seed_list
    tasks = [(chains, r, seed) for chains in spec.sweep_chain_counts for r, seed in enumerate(seeds)]
    cells: dict[tuple[int, int], list[WindowTrace]] = {}
    with ThreadPoolExecutor(max_workers=spec.threads) as executor:
        futures = {
            executor.submit(sweep_cell, spec, chains, seed, settings): (chains, r)
            for chains, r, seed in tasks
        }
        for future in tqdm(as_completed(futures), total=len(futures), desc="sweep cells", leave=False):
            key = futures[future]
            cells[key] = future.result()
            if logger is not None:
                logger.log(
                    "sweep_cell_done",
                    target=spec.target,
                    chains=key[0],
                    seed=seeds[key[1]],
                    grad_evals_per_chain=cells[key][-1].grad_evals_per_chain,
                )

    rows = [
        sweep_row(
            chains,
            [cells[(chains, r)] for r in range(len(seeds))],
            target_model.analytic_mean,
            target_model.analytic_marginal_sd,
            spec.bias_threshold,
        )
        for chains in spec.sweep_chain_counts
    ]
    frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    return CommandOutput(files={"sweep": write_table(frame, out_dir / "sweep.csv", settings.float_digits)})
