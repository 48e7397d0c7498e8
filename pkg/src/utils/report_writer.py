"""
Sweep report writer: aggregate and summary tables as CSV and as a formatted
Excel workbook.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

AGGREGATE_COLUMNS = ["algo", "shape", "n_traj", "seed", "final_score", "auc", "final_return",
                     "env_steps", "status", "error", "run_dir"]
KEY_COLUMNS = ["algo", "shape", "n_traj"]


def area_under_curve(env_steps: np.ndarray, scores: np.ndarray) -> float:
    """Trapezoidal area under the score curve divided by the step span (a mean score)."""
    env_steps = np.asarray(env_steps, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) == 0:
        return float("nan")
    if len(scores) == 1 or env_steps[-1] == env_steps[0]:
        return float(scores[-1])
    area = 0.5 * np.sum((scores[1:] + scores[:-1]) * np.diff(env_steps))
    return float(area / (env_steps[-1] - env_steps[0]))


class ReportWriter:
    """Builds sweep tables from per-cell result dictionaries and exports them."""

    def aggregate_frame(self, cells: List[Dict[str, Any]]) -> pd.DataFrame:
        """
        One row per cell, sorted by algorithm, shape, trajectory count and seed.

        Args:
            cells: Result dictionaries from the sweep engine

        Returns:
            DataFrame with AGGREGATE_COLUMNS
        """
        rows = [{column: cell.get(column) for column in AGGREGATE_COLUMNS} for cell in cells]
        frame = pd.DataFrame(rows, columns=AGGREGATE_COLUMNS)
        if frame.empty:
            return frame
        return frame.sort_values(["algo", "shape", "n_traj", "seed"], kind="mergesort").reset_index(drop=True)

    def summary_frame(self, aggregate: pd.DataFrame) -> pd.DataFrame:
        """
        Per (algo, shape, n_traj): mean/min/max final score, mean AUC, the
        number of completed seeds and every seed's final score.
        """
        if aggregate.empty:
            return pd.DataFrame(columns=[*KEY_COLUMNS, "mean_final_score", "min_final_score",
                                         "max_final_score", "mean_auc", "completed_seeds"])
        done = aggregate[aggregate["status"] == "Success"]
        summary = aggregate.groupby(KEY_COLUMNS, sort=True).agg(cells=("seed", "count")).reset_index()
        stats = done.groupby(KEY_COLUMNS, sort=True).agg(
            mean_final_score=("final_score", "mean"),
            min_final_score=("final_score", "min"),
            max_final_score=("final_score", "max"),
            mean_auc=("auc", "mean"),
            completed_seeds=("seed", "count"),
        ).reset_index()
        summary = summary.merge(stats, on=KEY_COLUMNS, how="left")
        if not done.empty:
            per_seed = done.pivot_table(index=KEY_COLUMNS, columns="seed", values="final_score",
                                        aggfunc="first")
            per_seed.columns = [f"final_seed_{seed}" for seed in per_seed.columns]
            summary = summary.merge(per_seed.reset_index(), on=KEY_COLUMNS, how="left")
        summary["completed_seeds"] = summary["completed_seeds"].fillna(0).astype(int)
        return summary.drop(columns=["cells"])

    def write_csv(self, frame: pd.DataFrame, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\n")
        return path

    def export_to_excel(self, aggregate: pd.DataFrame, summary: pd.DataFrame,
                        output_path: Union[str, Path]) -> bool:
        """
        Export the sweep to an Excel workbook with Aggregate and Summary sheets.

        Returns:
            True if successful, False otherwise
        """
        try:
            with pd.ExcelWriter(output_path, engine="openpyxl") as writer:
                aggregate.to_excel(writer, sheet_name="Aggregate", index=False)
                self._format_excel_worksheet(writer.sheets["Aggregate"], aggregate)
                summary.to_excel(writer, sheet_name="Summary", index=False)
                self._format_excel_worksheet(writer.sheets["Summary"], summary)
            return True
        except Exception as e:
            logger.error(f"Error exporting sweep report to Excel: {e}")
            return False

    def _format_excel_worksheet(self, worksheet, df: pd.DataFrame) -> None:
        """Header styling, score number format, column widths and borders."""
        from openpyxl.styles import Alignment, Border, Font, PatternFill, Side

        header_font = Font(bold=True, color="FFFFFF")
        header_fill = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
        for col in range(1, len(df.columns) + 1):
            cell = worksheet.cell(row=1, column=col)
            cell.font = header_font
            cell.fill = header_fill
            cell.alignment = Alignment(horizontal="center", vertical="center")

        score_columns = {index + 1 for index, name in enumerate(df.columns)
                         if "score" in str(name) or "auc" in str(name) or str(name).startswith("final_seed_")}
        for row in worksheet.iter_rows(min_row=2):
            for cell in row:
                if cell.column in score_columns:
                    cell.number_format = "0.000"

        for column in worksheet.columns:
            max_length = max((len(str(cell.value)) for cell in column if cell.value is not None), default=0)
            worksheet.column_dimensions[column[0].column_letter].width = min(max_length + 2, 50)

        thin = Side(style="thin")
        thin_border = Border(left=thin, right=thin, top=thin, bottom=thin)
        for row in worksheet.iter_rows():
            for cell in row:
                cell.border = thin_border

        worksheet.freeze_panes = "A2"
