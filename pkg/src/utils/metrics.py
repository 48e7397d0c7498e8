"""
Per-iteration training metrics, persisted as CSV with pandas.
"""

import logging
import math
import re
from pathlib import Path
from typing import Dict, List, Mapping, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

METRICS_FILE_NAME = "metrics.csv"
METRICS_COLUMNS: List[str] = [
    "iteration", "env_steps", "mean_true_return", "normalized_score", "wd_estimate", "gp_value",
    "disc_loss", "policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction", "wall_ms",
]
INTEGER_COLUMNS = ("iteration", "env_steps", "wall_ms")


class MetricsFileError(ValueError):
    """Raised for a metrics CSV that cannot be used, naming the file and line."""

    def __init__(self, path: Union[str, Path], line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class MetricsLog:
    """
    Appends one row per iteration and flushes it immediately, so an aborted
    run leaves every completed row on disk.
    """

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.rows = 0
        self._last_env_steps = -1
        pd.DataFrame(columns=METRICS_COLUMNS).to_csv(self.path, index=False, lineterminator="\n")

    def append(self, row: Mapping[str, float]) -> Dict[str, float]:
        """
        Raises:
            ValueError: If a column is missing, a value is non-finite or
                env_steps does not increase
        """
        missing = [c for c in METRICS_COLUMNS if c not in row]
        if missing:
            raise ValueError(f"metrics row missing columns {missing}")
        record = {c: int(row[c]) if c in INTEGER_COLUMNS else float(row[c]) for c in METRICS_COLUMNS}
        bad = [c for c, v in record.items() if not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite metrics {bad} at iteration {record['iteration']}")
        if record["env_steps"] <= self._last_env_steps:
            raise ValueError(
                f"env_steps must increase: {record['env_steps']} after {self._last_env_steps}")

        with open(self.path, "a", encoding="utf-8", newline="") as f:
            pd.DataFrame([record], columns=METRICS_COLUMNS).to_csv(
                f, header=False, index=False, lineterminator="\n")
        self._last_env_steps = record["env_steps"]
        self.rows += 1
        return record


def read_metrics(path: Union[str, Path]) -> pd.DataFrame:
    """
    Load and validate a metrics CSV.

    Raises:
        MetricsFileError: For a wrong header, ragged rows, non-numeric or
            non-finite values; the message names the file and line
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError:
        raise MetricsFileError(path, 0, "file not found") from None
    except pd.errors.EmptyDataError:
        raise MetricsFileError(path, 1, "file is empty") from None
    except pd.errors.ParserError as exc:
        raise MetricsFileError(path, _parser_error_line(str(exc)), str(exc).strip()) from None

    if list(frame.columns) != METRICS_COLUMNS:
        raise MetricsFileError(path, 1, f"header {list(frame.columns)} does not match {METRICS_COLUMNS}")

    numeric = frame.apply(pd.to_numeric, errors="coerce").astype(float)
    invalid = ~np.isfinite(numeric.to_numpy())
    if invalid.any():
        rows, cols = invalid.nonzero()
        position, column = int(rows[0]), METRICS_COLUMNS[int(cols[0])]
        value = frame.iloc[position][column]
        raise MetricsFileError(path, position + 2, f"invalid value '{value}' in column '{column}'")
    return numeric


def _parser_error_line(message: str) -> int:
    match = re.search(r"line (\d+)", message)
    return int(match.group(1)) if match else 0
