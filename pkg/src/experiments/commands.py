"""Experiment commands: single runs, seed replication, oracle tables, re-summaries.

Each command takes an ExperimentSpec, writes its CSV/JSON outputs into
`spec.output_dir` and returns the written paths. Independent tasks
(replicate seeds) run on a thread pool and are re-ordered by seed index,
so output bytes never depend on `threads`.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd
from tqdm import tqdm

from src.config import Config
from src.diagnostics.export import write_report
from src.diagnostics.summary import default_quantities, summarize
from src.engine.run_log import RunLogger
from src.engine.runner import ChainRunner, RunResult
from src.engine.storage import read_draws, save_run_meta, write_draws
from src.errors import InvalidArgumentError
from src.model.target_spec import parse_target
from src.oracle.studies import error_decomposition, ou_decay_table, simulate_ou_decay, two_state_table
from src.schemas import DiagnosticsReport, ExperimentSpec, ReplicateStudy

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURE = 2
EXIT_TARGETS_NOT_MET = 3

REPLICATE_COLUMNS = ["seed", "rhat", "split_rhat", "ess", "mean", "q05", "q50", "q95"]


@dataclass
class CommandOutput:
    files: dict[str, Path] = field(default_factory=dict)
    exit_code: int = EXIT_OK
    result: RunResult | None = None
    report: DiagnosticsReport | None = None


def prepare_output_dir(path: Path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        marker = path / ".write_test"
        marker.write_text("")
        marker.unlink()
    except OSError as exc:
        raise OSError(f"cannot write to output directory {path}: {exc.strerror or exc}") from exc
    return path


def write_table(frame: pd.DataFrame, path: Path, digits: int = 17) -> Path:
    frame.to_csv(path, index=False, float_format=f"%.{digits}g", na_rep="nan", lineterminator="\n")
    return path


# ── run ───────────────────────────────────────────────────────────────────────

def cmd_run(
    spec: ExperimentSpec,
    logger: RunLogger | None = None,
    settings: Config | None = None,
) -> CommandOutput:
    settings = settings or Config()
    out_dir = prepare_output_dir(spec.output_dir)
    model = parse_target(spec.target)
    quantities = default_quantities(model.dimension, spec.include_squares)
    runner = ChainRunner(
        spec.run, model, quantities, threads=spec.threads, logger=logger, settings=settings
    )
    result = runner.run_adaptive() if spec.run.target_ess is not None else runner.run()

    files = {
        "draws": write_draws(result.matrix, out_dir, spec.output_format, settings.float_digits),
    }
    files["summary"], files["summary_json"] = write_report(result.report, out_dir, settings.float_digits)
    meta = {"target": spec.target, "threads": spec.threads, **result.meta()}
    files["run_meta"] = save_run_meta(meta, out_dir)

    exit_code = EXIT_TARGETS_NOT_MET if result.stopping_reason == "budget-exhausted" else EXIT_OK
    return CommandOutput(files=files, exit_code=exit_code, result=result, report=result.report)


# ── replicate ─────────────────────────────────────────────────────────────────

def _replicate_row(spec: ExperimentSpec, seed: int, settings: Config) -> dict:
    model = parse_target(spec.target)
    config = spec.run.model_copy(update={"root_seed": seed})
    quantities = default_quantities(model.dimension, spec.include_squares)
    runner = ChainRunner(config, model, quantities, threads=1, settings=settings)
    result = runner.run_adaptive() if config.target_ess is not None else runner.run()
    first = result.report.quantities[0]
    return {
        "seed": seed,
        "rhat": first.rhat,
        "split_rhat": first.split_rhat,
        "ess": first.ess,
        "mean": first.mean,
        "q05": first.q05,
        "q50": first.q50,
        "q95": first.q95,
    }


def replicate_aggregate(frame: pd.DataFrame, spec: ExperimentSpec, truth: float | None) -> dict:
    limit = 1.0 + spec.run.rhat_threshold
    aggregate = {
        "replicates": int(len(frame)),
        "fraction_rhat_above_threshold": float((frame["rhat"] > limit).mean()),
        "fraction_split_rhat_above_threshold": float((frame["split_rhat"] > limit).mean()),
        "mean_ess": float(frame["ess"].mean()),
        "sd_ess": float(frame["ess"].std(ddof=1)),
        "mean_of_means": float(frame["mean"].mean()),
        "sd_of_means": float(frame["mean"].std(ddof=1)),
    }
    if truth is not None:
        decomposition = error_decomposition(ReplicateStudy(estimates=frame["mean"].tolist()), truth)
        aggregate.update(truth=truth, **decomposition._asdict())
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in aggregate.items()}


def cmd_replicate(
    spec: ExperimentSpec,
    logger: RunLogger | None = None,
    settings: Config | None = None,
) -> CommandOutput:
    """One independent run per seed; one replicate.csv row per seed."""
    settings = settings or Config()
    out_dir = prepare_output_dir(spec.output_dir)
    seeds = spec.seed_list
    target_model = parse_target(spec.target)

    rows: list[dict] = []
    with ThreadPoolExecutor(max_workers=spec.threads) as executor:
        futures = {executor.submit(_replicate_row, spec, seed, settings): i for i, seed in enumerate(seeds)}
        for future in tqdm(as_completed(futures), total=len(futures), desc="replicates", leave=False):
            row = future.result()
            rows.append({**row, "_order": futures[future]})
            if logger is not None:
                logger.log("replicate_done", target=spec.target, **row)

    # Sort by seed order for deterministic output
    rows.sort(key=lambda r: r["_order"])
    frame = pd.DataFrame(rows, columns=REPLICATE_COLUMNS)
    files = {"replicate": write_table(frame, out_dir / "replicate.csv", settings.float_digits)}

    if len(frame) >= 2:
        truth = float(target_model.analytic_mean[0]) if target_model.has_analytic_moments else None
        path = out_dir / "replicate_aggregate.json"
        path.write_text(json.dumps(replicate_aggregate(frame, spec, truth), indent=2, allow_nan=False))
        files["aggregate"] = path
    return CommandOutput(files=files)


# ── oracle ────────────────────────────────────────────────────────────────────

def cmd_oracle(spec: ExperimentSpec, settings: Config | None = None) -> CommandOutput:
    settings = settings or Config()
    out_dir = prepare_output_dir(spec.output_dir)
    files = {
        "ou_decay": write_table(ou_decay_table(spec.ou, spec.t_grid), out_dir / "ou_decay.csv", settings.float_digits),
        "two_state": write_table(
            two_state_table(spec.two_state_q, spec.two_state_length, spec.run.root_seed, spec.threads),
            out_dir / "two_state.csv",
            settings.float_digits,
        ),
    }
    if spec.ou_groups >= 2:
        simulated = simulate_ou_decay(
            spec.ou, spec.t_grid, spec.ou_groups, spec.ou_replicates, spec.run.root_seed, spec.threads
        )
        files["ou_decay_simulated"] = write_table(simulated, out_dir / "ou_decay_simulated.csv", settings.float_digits)
    return CommandOutput(files=files)


# ── summarize ─────────────────────────────────────────────────────────────────

def cmd_summarize(
    draws_path: Path,
    out_dir: Path | None = None,
    *,
    include_squares: bool = False,
    rhat_threshold: float | None = None,
    settings: Config | None = None,
) -> CommandOutput:
    """Recompute diagnostics from a draws file written by `run`."""
    settings = settings or Config()
    matrix = read_draws(Path(draws_path))
    if matrix.num_draws < 1:
        raise InvalidArgumentError(f"{draws_path} holds no sampling draws")
    report = summarize(
        matrix,
        default_quantities(matrix.dimension, include_squares),
        rhat_threshold=rhat_threshold,
        config=settings,
    )
    target_dir = prepare_output_dir(out_dir or Path(draws_path).parent)
    csv_path, json_path = write_report(report, target_dir, settings.float_digits)
    return CommandOutput(files={"summary": csv_path, "summary_json": json_path}, report=report)

