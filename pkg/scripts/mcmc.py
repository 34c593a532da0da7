"""CLI entry point for runs, replicate studies, chain-count sweeps and oracle tables.

Usage:
    python scripts/mcmc.py run --target gaussian:d=1 --chains 4
    python scripts/mcmc.py oracle --out outputs/oracle
"""

from __future__ import annotations

import sys
from pathlib import Path

# Ensure project root is on sys.path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.experiments.cli import main


if __name__ == "__main__":
    sys.exit(main())
