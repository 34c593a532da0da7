"""Draw files and run metadata.

`draws.csv` has one row per (chain, iteration) with header
`chain,group,phase,iter,dim_0..dim_{d-1}`; floats use 17 significant
digits. The binary format is a 16-byte header (8-byte magic, uint32
version, uint32 reserved) followed by little-endian float64 values in
(chain, iteration, dimension) order, with a JSON sidecar holding the
shape, grouping and per-chain metadata.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from src.diagnostics.summary import WARMUP, ChainMatrix
from src.engine.run_log import json_safe
from src.errors import InvalidArgumentError
from src.schemas import ChainMeta

MAGIC = b"MCMCDRAW"
VERSION = 1
_HEADER = struct.Struct("<8sII")

DRAWS_CSV = "draws.csv"
DRAWS_BIN = "draws.bin"
RUN_META = "run_meta.json"


# ── CSV ───────────────────────────────────────────────────────────────────────

def draws_frame(matrix: ChainMatrix) -> pd.DataFrame:
    m, t, d = matrix.draws.shape
    frame = pd.DataFrame({
        "chain": np.repeat(np.arange(m), t),
        "group": np.repeat(matrix.group_of_chain, t),
        "phase": np.tile(np.asarray(matrix.phases, dtype=object), m),
        "iter": np.tile(np.arange(t), m),
    })
    values = matrix.draws.reshape(m * t, d)
    for i in range(d):
        frame[f"dim_{i}"] = values[:, i]
    return frame


def write_draws_csv(matrix: ChainMatrix, path: Path, digits: int = 17) -> Path:
    path = Path(path)
    draws_frame(matrix).to_csv(
        path, index=False, float_format=f"%.{digits}g", na_rep="nan", lineterminator="\n"
    )
    return path


def _read_draws_csv(path: Path) -> tuple[np.ndarray, int, np.ndarray]:
    frame = pd.read_csv(path, float_precision="round_trip")
    dims = [c for c in frame.columns if c.startswith("dim_")]
    if not dims or not {"chain", "group", "phase", "iter"} <= set(frame.columns):
        raise InvalidArgumentError(f"{path} is not a draws file")
    frame = frame.sort_values(["chain", "iter"], kind="stable")
    num_chains = int(frame["chain"].nunique())
    if len(frame) % num_chains:
        raise InvalidArgumentError(f"{path}: chains have unequal lengths")
    draws = frame[dims].to_numpy(dtype=float).reshape(num_chains, -1, len(dims))
    first_chain = frame[frame["chain"] == frame["chain"].iloc[0]]
    num_warmup = int((first_chain["phase"] == WARMUP).sum())
    groups = frame.groupby("chain", sort=True)["group"].first().to_numpy(dtype=int)
    return draws, num_warmup, groups


# ── Binary ────────────────────────────────────────────────────────────────────

def _sidecar(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def write_draws_bin(matrix: ChainMatrix, path: Path) -> Path:
    path = Path(path)
    m, t, d = matrix.draws.shape
    with path.open("wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, 0))
        f.write(np.ascontiguousarray(matrix.draws, dtype="<f8").tobytes())
    sidecar = {
        "format_version": VERSION,
        "num_chains": m,
        "num_iterations": t,
        "dimension": d,
        "num_warmup": matrix.num_warmup,
        "group_of_chain": matrix.group_of_chain.tolist(),
        "chain_meta": [c.model_dump() for c in matrix.chain_meta],
    }
    _sidecar(path).write_text(json.dumps(json_safe(sidecar), indent=2))
    return path


def _read_draws_bin(path: Path) -> ChainMatrix:
    sidecar_path = _sidecar(path)
    if not sidecar_path.exists():
        raise InvalidArgumentError(f"missing metadata sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text())
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidArgumentError(f"{path} is too short for a draws header")
    magic, version, _ = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise InvalidArgumentError(f"{path}: unrecognized header {magic!r} v{version}")
    shape = (meta["num_chains"], meta["num_iterations"], meta["dimension"])
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != int(np.prod(shape)):
        raise InvalidArgumentError(f"{path}: expected {np.prod(shape)} values, found {data.size}")
    return ChainMatrix(
        draws=data.reshape(shape).astype(float),
        num_warmup=meta["num_warmup"],
        group_of_chain=np.asarray(meta["group_of_chain"]),
        chain_meta=[ChainMeta(**c) for c in meta.get("chain_meta", [])],
    )


# ── Public API ────────────────────────────────────────────────────────────────

def write_draws(matrix: ChainMatrix, out_dir: Path, fmt: str = "csv", digits: int = 17) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        return write_draws_csv(matrix, out_dir / DRAWS_CSV, digits)
    if fmt == "bin":
        return write_draws_bin(matrix, out_dir / DRAWS_BIN)
    raise InvalidArgumentError(f"unknown draws format {fmt!r}")


def read_draws(path: Path) -> ChainMatrix:
    """Rebuild a ChainMatrix from draws.csv or draws.bin.

    Per-chain metadata comes from the binary sidecar, or for CSV from a
    run_meta.json in the same directory when present.
    """
    path = Path(path)
    if not path.exists():
        raise InvalidArgumentError(f"draws file not found: {path}")
    if path.suffix == ".bin":
        return _read_draws_bin(path)
    draws, num_warmup, groups = _read_draws_csv(path)
    chain_meta: list[ChainMeta] = []
    meta_path = path.parent / RUN_META
    if meta_path.exists():
        chain_meta = [ChainMeta(**c) for c in load_run_meta(meta_path).get("chains", [])]
    return ChainMatrix(draws=draws, num_warmup=num_warmup, group_of_chain=groups, chain_meta=chain_meta)


def save_run_meta(meta: dict[str, Any], out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / RUN_META
    path.write_text(json.dumps(json_safe(meta), indent=2, allow_nan=False))
    return path


def load_run_meta(path: Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text())
