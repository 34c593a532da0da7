"""Central settings for the MCMC engine, diagnostics and experiment CLI."""

from pathlib import Path

from pydantic import field_validator
from pydantic_settings import BaseSettings


class Config(BaseSettings):
    # ── Paths ─────────────────────────────────────────────────────────────────
    project_root: Path = Path(__file__).resolve().parent.parent
    output_dir: Path = project_root / "outputs"
    log_path: Path = project_root / "logs" / "run_log.jsonl"

    # ── Execution ─────────────────────────────────────────────────────────────
    threads: int = 1
    output_format: str = "csv"      # csv | bin
    float_digits: int = 17          # round-trip exact float text

    # ── Diagnostics ───────────────────────────────────────────────────────────
    quantile_levels: tuple[float, float, float] = (0.05, 0.5, 0.95)   # q05, q50, q95 columns
    low_ess_threshold: float = 100.0
    rhat_threshold: float = 0.01

    # ── Adaptive stopping ─────────────────────────────────────────────────────
    adaptive_initial_increment: int = 100   # iterations per chain, doubling

    # ── Chain-count sweep (desk scale) ────────────────────────────────────────
    sweep_dimension: int = 51
    sweep_condition_number: float = 1e3
    sweep_replicates: int = 20
    sweep_bias_threshold: float = 0.1
    sweep_chain_counts: list[int] = [2, 4, 8]
    sweep_warmup: int = 1000

    # ── Oracle studies ────────────────────────────────────────────────────────
    ou_mu0: float = 2.0
    ou_sigma0: float = 1.0
    ou_mu: float = 0.0
    ou_sigma: float = 1.0
    ou_t_grid: list[float] = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]
    two_state_q: list[float] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    two_state_length: int = 1_000_000

    model_config = {"env_file": ".env", "env_file_encoding": "utf-8"}

    @field_validator("quantile_levels")
    @classmethod
    def _increasing_levels(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        if not all(0.0 <= q <= 1.0 for q in value) or not value[0] < value[1] < value[2]:
            raise ValueError(f"quantile levels must increase within [0, 1], got {value}")
        return value
