"""Command-line front end.

    mcmc run          --target gaussian:d=1 --chains 4 --warmup 1000 --samples 1000
    mcmc replicate    --target gaussian:d=1 --replicates 100 --samples 10
    mcmc sweep-chains --target illcond:d=51,kappa=1000 --adapt cross-chain
    mcmc oracle
    mcmc summarize    outputs/draws.csv

Settings come from a JSON config file (`--config`, RunConfig fields at the
top level plus experiment keys) and are overridden by flags. Exit codes:
0 success, 1 invalid arguments, 2 runtime failure, 3 adaptive targets not met.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from src.config import Config
from src.engine.run_log import RunLogger
from src.engine.runner import all_flags
from src.errors import InvalidArgumentError
from src.experiments.commands import (
    EXIT_FAILURE,
    EXIT_INVALID,
    CommandOutput,
    cmd_oracle,
    cmd_replicate,
    cmd_run,
    cmd_summarize,
)
from src.experiments.sweep import cmd_sweep_chains
from src.schemas import ExperimentSpec, RunConfig

# flag dest -> RunConfig field
_RUN_FLAGS = {
    "sampler": "sampler",
    "chains": "chains",
    "warmup": "warmup",
    "samples": "samples",
    "groups": "groups",
    "adapt": "adaptation",
    "init": "init_strategy",
    "init_scale": "init_scale",
    "target_ess": "target_ess",
    "max_iterations": "max_total_iterations",
    "rhat_threshold": "rhat_threshold",
    "leapfrog_steps": "num_leapfrog_steps",
    "jitter": "jitter_trajectory",
    "seed": "root_seed",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InvalidArgumentError(message)


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--format", choices=["csv", "bin"], dest="output_format")
    return common


def _run_flags() -> argparse.ArgumentParser:
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("--target", help="target spec, e.g. gaussian:d=3,var=1;4;9")
    flags.add_argument("--sampler", choices=["rwm", "mala", "hmc"])
    flags.add_argument("--chains", type=int)
    flags.add_argument("--warmup", type=int)
    flags.add_argument("--samples", type=int)
    flags.add_argument("--groups", type=int)
    flags.add_argument("--adapt", choices=["per-chain", "cross-chain", "per_chain", "cross_chain"])
    flags.add_argument("--init", choices=["overdispersed", "standard-normal", "exact", "fixed-points"])
    flags.add_argument("--init-scale", type=float)
    flags.add_argument("--target-ess", type=float)
    flags.add_argument("--max-iterations", type=int, help="sampling budget per chain in adaptive mode")
    flags.add_argument("--rhat-threshold", type=float)
    flags.add_argument("--leapfrog-steps", type=int)
    flags.add_argument("--no-jitter", dest="jitter", action="store_false", default=None)
    flags.add_argument("--include-squares", action="store_true", default=None)
    return flags


def build_parser() -> argparse.ArgumentParser:
    common, run_flags = _common_flags(), _run_flags()
    parser = _Parser(prog="mcmc", description="Parallel MCMC runs, diagnostics and oracle studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("run", parents=[common, run_flags], help="run chains and write draws + summary")

    replicate = sub.add_parser("replicate", parents=[common, run_flags], help="repeat a run over seeds")
    replicate.add_argument("--replicates", type=int)
    replicate.add_argument("--seeds", type=int, nargs="+")

    sweep = sub.add_parser("sweep-chains", parents=[common, run_flags], help="gradient cost vs chain count")
    sweep.add_argument("--replicates", type=int)
    sweep.add_argument("--seeds", type=int, nargs="+")
    sweep.add_argument("--counts", type=int, nargs="+", dest="sweep_chain_counts")
    sweep.add_argument("--bias-threshold", type=float)

    oracle = sub.add_parser("oracle", parents=[common], help="OU decay and two-state tables")
    oracle.add_argument("--two-state-length", type=int)
    oracle.add_argument("--ou-groups", type=int)
    oracle.add_argument("--ou-replicates", type=int)

    summarize = sub.add_parser("summarize", parents=[common], help="recompute diagnostics from a draws file")
    summarize.add_argument("draws", type=Path)
    summarize.add_argument("--include-squares", action="store_true", default=False)
    summarize.add_argument("--rhat-threshold", type=float)
    return parser


# ── Spec assembly ─────────────────────────────────────────────────────────────

def load_config_file(path: Path | None) -> dict:
    """Split a JSON config into RunConfig fields and experiment keys."""
    if path is None:
        return {"run": {}}
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InvalidArgumentError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise InvalidArgumentError(f"config file {path} must hold a JSON object")
    run = {k: v for k, v in raw.items() if k in RunConfig.model_fields}
    rest = {k: v for k, v in raw.items() if k not in RunConfig.model_fields}
    rest["run"] = {**rest.get("run", {}), **run}
    return rest


def build_spec(args: argparse.Namespace, kind: str, settings: Config) -> ExperimentSpec:
    data = load_config_file(args.config)
    data["kind"] = kind
    values = vars(args)
    for dest, field in _RUN_FLAGS.items():
        if values.get(dest) is not None:
            data["run"][field] = values[dest]
    for key in (
        "target", "replicates", "seeds", "sweep_chain_counts", "bias_threshold",
        "include_squares", "output_format", "threads", "two_state_length",
        "ou_groups", "ou_replicates",
    ):
        if values.get(key) is not None:
            data[key] = values[key]
    if args.out is not None:
        data["output_dir"] = args.out
    data.setdefault("output_dir", settings.output_dir)
    data.setdefault("threads", settings.threads)
    data.setdefault("output_format", settings.output_format)

    if kind == "sweep_chains":
        _sweep_defaults(data, settings)
    if kind == "oracle":
        data.setdefault("ou", {
            "mu0": settings.ou_mu0, "sigma0": settings.ou_sigma0,
            "mu": settings.ou_mu, "sigma": settings.ou_sigma,
        })
        data.setdefault("t_grid", settings.ou_t_grid)
        data.setdefault("two_state_q", settings.two_state_q)
        data.setdefault("two_state_length", settings.two_state_length)
    return ExperimentSpec.model_validate(data)


def _sweep_defaults(data: dict, settings: Config) -> None:
    data.setdefault(
        "target", f"illcond:d={settings.sweep_dimension},kappa={settings.sweep_condition_number:g}"
    )
    data.setdefault("replicates", settings.sweep_replicates)
    data.setdefault("sweep_chain_counts", settings.sweep_chain_counts)
    data.setdefault("bias_threshold", settings.sweep_bias_threshold)
    data["run"].setdefault("adaptation", "cross_chain")
    data["run"].setdefault("warmup", settings.sweep_warmup)


# ── Reporting ─────────────────────────────────────────────────────────────────

def _print_files(output: CommandOutput) -> None:
    for name, path in output.files.items():
        print(f"  {name:<20} {path}")


def _print_run(output: CommandOutput) -> None:
    result = output.result
    print(f"  stopping reason: {result.stopping_reason}")
    print(f"  draws per chain: {result.matrix.num_draws} (warmup {result.matrix.num_warmup})")
    print(f"  min ESS: {result.report.min_ess:.1f}   max R-hat: {result.report.max_rhat:.4f}")
    flags = all_flags(result)
    print(f"  flags: {', '.join(flags) if flags else '(none)'}")


def main(argv: list[str] | None = None) -> int:
    settings = Config()
    try:
        args = build_parser().parse_args(argv)
        kind = args.command.replace("-", "_")
        print("=" * 60)
        print(f"mcmc {args.command}")
        print("=" * 60)

        if kind == "summarize":
            output = cmd_summarize(
                args.draws,
                args.out,
                include_squares=args.include_squares,
                rhat_threshold=args.rhat_threshold,
                settings=settings,
            )
        else:
            spec = build_spec(args, kind, settings)
            logger = RunLogger(settings.log_path)
            if kind == "run":
                output = cmd_run(spec, logger, settings)
                _print_run(output)
            elif kind == "replicate":
                output = cmd_replicate(spec, logger, settings)
            elif kind == "sweep_chains":
                output = cmd_sweep_chains(spec, logger, settings)
            else:
                output = cmd_oracle(spec, settings)

        _print_files(output)
        return output.exit_code
    except (InvalidArgumentError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE

