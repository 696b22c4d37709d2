"""
CSV time series for scenarios.

Every file has a ``t`` column in seconds and is read as a step function:
the value at time τ is the last row with t <= τ.  Headers are normalized
(lower case, spaces to underscores) before the required columns are checked.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ..errors import InputValidationError

logger = logging.getLogger(__name__)

LOAD_COLUMNS = ("t", "node", "p_kw", "q_kvar")
IRRADIANCE_COLUMNS = ("t", "device", "p_avail_kw")
REFERENCE_COLUMNS = ("t", "p0_ref_kw")


def _normalize_headers(df: pd.DataFrame) -> pd.DataFrame:
    df.columns = df.columns.astype(str).str.lower().str.strip().str.replace(" ", "_")
    return df


def read_series_csv(path: str | Path, required: Sequence[str]) -> pd.DataFrame:
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputValidationError(f"Could not read series file {path}: {e}")
    df = _normalize_headers(df)
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise InputValidationError(f"{Path(path).name} is missing columns {missing} (has {list(df.columns)}).")
    if df.empty:
        raise InputValidationError(f"{Path(path).name} has no rows.")
    if df["t"].min() > 0:
        raise InputValidationError(f"{Path(path).name} starts at t={df['t'].min()}s; series must cover t=0.")
    logger.debug("Read %d rows from %s", len(df), path)
    return df.sort_values("t", kind="stable").reset_index(drop=True)


def step_values(df: pd.DataFrame, key: str, value: str, times: np.ndarray, keys: Sequence) -> np.ndarray:
    """
    Values of ``value`` per (time, key) as a len(times) × len(keys) array.
    Keys without rows are zero.
    """
    wide = df.pivot_table(index="t", columns=key, values=value, aggfunc="sum")
    wide = wide.reindex(columns=list(keys)).fillna(0.0)
    picked = wide.reindex(wide.index.union(times)).ffill().loc[times]
    return picked.to_numpy(dtype=float)


def step_scalar(df: pd.DataFrame, value: str, times: np.ndarray) -> np.ndarray:
    series = df.groupby("t")[value].last()
    return series.reindex(series.index.union(times)).ffill().loc[times].to_numpy(dtype=float)


INJECTION_COLUMNS = ("node", "p_kw", "q_kvar")


def read_injections_csv(path: str | Path, num_nodes: int, base_kva: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-node net injections (positive = generation) in pu from a node,p_kw,q_kvar table."""
    try:
        df = _normalize_headers(pd.read_csv(path))
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputValidationError(f"Could not read injection file {path}: {e}")
    missing = [c for c in INJECTION_COLUMNS if c not in df.columns]
    if missing:
        raise InputValidationError(f"{Path(path).name} is missing columns {missing}.")
    bad = sorted(set(df["node"].astype(int)) - set(range(num_nodes)))
    if bad:
        raise InputValidationError(f"{Path(path).name} references unknown nodes {bad}.")
    grouped = df.groupby(df["node"].astype(int))[["p_kw", "q_kvar"]].sum().reindex(range(num_nodes), fill_value=0.0)
    return grouped["p_kw"].to_numpy(dtype=float) / base_kva, grouped["q_kvar"].to_numpy(dtype=float) / base_kva
