"""Data layer: load and reshape the simulator's CSV artifacts.

Input schemas (the contract with the simulator):
  rates.csv     node,block_time,rate36
  outcomes.csv  node,block_time,block_id,protocol,success,missing,
                round_trips,bytes_down,bytes_up
"""

from __future__ import annotations

from pathlib import Path

import pandas as pd

RATES_COLUMNS = ["node", "block_time", "rate36"]
OUTCOMES_COLUMNS = ["node", "block_time", "block_id", "protocol", "success",
                    "missing", "round_trips", "bytes_down", "bytes_up"]


class DataError(ValueError):
    """Missing input file or unexpected schema."""


def _load(run_dir: Path, filename: str, expected: list[str]) -> pd.DataFrame:
    path = Path(run_dir) / filename
    if not path.is_file():
        raise DataError(f"{path} does not exist")
    df = pd.read_csv(path)
    if list(df.columns) != expected:
        raise DataError(f"{path}: expected columns {expected}, "
                        f"got {list(df.columns)}")
    return df


def load_rates(run_dir: Path) -> pd.DataFrame:
    return _load(run_dir, "rates.csv", RATES_COLUMNS)


def load_outcomes(run_dir: Path) -> pd.DataFrame:
    return _load(run_dir, "outcomes.csv", OUTCOMES_COLUMNS)


def rate_series(rates: pd.DataFrame) -> dict[int, tuple[list[int], list[float]]]:
    """Per node: (block_times, rate36 values), in block-time order."""
    out = {}
    for node, grp in rates.groupby("node"):
        grp = grp.sort_values("block_time")
        out[int(node)] = (grp["block_time"].tolist(), grp["rate36"].tolist())
    return out


def missing_series(outcomes: pd.DataFrame) -> tuple[list[int], list[int]]:
    """Total missing-transaction count per block-time, summed over nodes."""
    grp = outcomes.groupby("block_time")["missing"].sum().sort_index()
    return grp.index.tolist(), grp.tolist()


def graphene_failures(outcomes: pd.DataFrame) -> int:
    """Count of Graphene blocks that failed across the whole run."""
    g = outcomes[outcomes["protocol"] == "graphene"]
    if g.empty:
        raise DataError("outcomes.csv holds no protocol=graphene rows")
    return int((g["success"] == 0).sum())
