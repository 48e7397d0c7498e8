"""
Training-curve plots: normalized score against environment steps, written
as self-contained SVG with matplotlib.
"""

import logging
import re
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from .metrics import MetricsFileError, read_metrics  # noqa: E402

logger = logging.getLogger(__name__)

SEED_SUFFIX = re.compile(r"[_-]?seed[_-]?\d+$")
SVG_HASH_SALT = "wdail-lab"

__all__ = ["MetricsFileError", "default_label", "emit_plot", "group_series"]


def default_label(path: Union[str, Path]) -> str:
    """Run directory name with any trailing seed tag removed."""
    path = Path(path)
    name = path.parent.name if path.suffix == ".csv" else path.name
    return SEED_SUFFIX.sub("", name) or name


def group_series(paths: Sequence[Union[str, Path]],
                 labels: Optional[Sequence[str]] = None) -> "OrderedDict[str, pd.DataFrame]":
    """
    Load every file and combine runs sharing a label into one frame with
    columns mean/min/max of normalized_score, indexed by env_steps.

    Raises:
        MetricsFileError: For a malformed metrics file
        ValueError: If no files are given or labels do not match the files
    """
    if not paths:
        raise ValueError("emit_plot: at least one metrics file is required")
    if labels is not None and len(labels) != len(paths):
        raise ValueError(f"{len(labels)} labels for {len(paths)} metrics files")

    grouped: Dict[str, List[pd.Series]] = OrderedDict()
    for index, path in enumerate(paths):
        frame = read_metrics(path)
        label = labels[index] if labels is not None else default_label(path)
        series = frame.set_index("env_steps")["normalized_score"].rename(str(path))
        grouped.setdefault(label, []).append(series)

    combined: "OrderedDict[str, pd.DataFrame]" = OrderedDict()
    for label, runs in grouped.items():
        table = pd.concat(runs, axis=1, join="inner")
        combined[label] = pd.DataFrame({
            "mean": table.mean(axis=1),
            "min": table.min(axis=1),
            "max": table.max(axis=1),
            "runs": len(runs),
        })
    return combined


def emit_plot(paths: Sequence[Union[str, Path]], out: Union[str, Path],
              labels: Optional[Sequence[str]] = None, title: str = "", dpi: int = 100) -> Path:
    """
    Plot one line per label, with a min/max band where several runs share it.
    Identical inputs give identical SVG bytes.
    """
    series = group_series(paths, labels)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)

    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(7, 4.5), dpi=dpi)
        for label, table in series.items():
            steps = table.index.to_numpy()
            (line,) = ax.plot(steps, table["mean"].to_numpy(), label=label, linewidth=1.5)
            if len(table) and table["runs"].iloc[0] > 1:
                ax.fill_between(steps, table["min"].to_numpy(), table["max"].to_numpy(),
                                color=line.get_color(), alpha=0.2, linewidth=0)
        ax.set_xlabel("environment steps")
        ax.set_ylabel("normalized score")
        if title:
            ax.set_title(title)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="best", fontsize="small")
        fig.tight_layout()
        fig.savefig(out, format="svg", metadata={"Date": None})
        plt.close(fig)

    logger.info(f"Wrote plot of {len(series)} series to {out}")
    return out
